//! CSV persistence for generated datasets, with a JSON sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::write_atomic;

use super::LabeledDataset;

/// Sidecar describing how a dataset file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub rows: usize,
    pub num_classes: usize,
    /// Row-major component means, one inner vector per class.
    pub centers: Option<Vec<Vec<f64>>>,
    /// Per-axis component variance.
    pub covariance: Option<f64>,
}

impl DatasetMeta {
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        csv.with_file_name(format!("{stem}.meta.json"))
    }
}

/// Columns `x0..x{d-1},label`, plus `center_x*` when centers are known.
pub fn write_dataset_csv(path: &Path, ds: &LabeledDataset, meta: &DatasetMeta) -> Result<()> {
    let d = ds.dim();
    let mut out = String::new();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    if ds.centers.is_some() {
        header.extend((0..d).map(|j| format!("center_x{j}")));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in ds.x.row_iter().enumerate() {
        for v in row {
            write!(out, "{v},").expect("write to String");
        }
        write!(out, "{}", ds.labels[i]).expect("write to String");
        if let Some(c) = &ds.centers {
            for v in c.row(ds.labels[i]) {
                write!(out, ",{v}").expect("write to String");
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Json {
        what: "dataset meta".into(),
        source: e,
    })?;
    write_atomic(&DatasetMeta::sidecar_path(path), format!("{json}\n").as_bytes())
}

/// Reads a dataset written by [`write_dataset_csv`]. Centers and the class
/// count come from the sidecar when it exists.
pub fn read_dataset_csv(path: &Path) -> Result<(LabeledDataset, Option<DatasetMeta>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        what: format!("dataset CSV {}", path.display()),
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
    let label_col = header
        .iter()
        .position(|&h| h == "label")
        .ok_or_else(|| bad("no `label` column".into()))?;
    if label_col == 0 || header[..label_col].iter().enumerate().any(|(j, h)| *h != format!("x{j}")) {
        return Err(bad("expected columns x0..x{d-1} before `label`".into()));
    }
    let d = label_col;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(format!("line {} has {} fields, header has {}", ln + 2, fields.len(), header.len())));
        }
        for f in &fields[..d] {
            data.push(f.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", ln + 2)))?);
        }
        labels.push(fields[d].parse::<usize>().map_err(|e| bad(format!("line {}: {e}", ln + 2)))?);
    }
    let x = Matrix::from_vec(labels.len(), d, data)?;
    let sidecar = DatasetMeta::sidecar_path(path);
    let meta: Option<DatasetMeta> = if sidecar.is_file() {
        let s = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(serde_json::from_str(&s).map_err(|e| Error::Json {
            what: sidecar.display().to_string(),
            source: e,
        })?)
    } else {
        None
    };
    let num_classes = meta
        .as_ref()
        .map(|m| m.num_classes)
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let centers = match meta.as_ref().and_then(|m| m.centers.as_ref()) {
        Some(rows) => Some(Matrix::from_rows(rows)?),
        None => None,
    };
    Ok((LabeledDataset::new(x, labels, num_classes, centers)?, meta))
}
