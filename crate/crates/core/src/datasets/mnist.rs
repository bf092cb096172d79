use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::idx::{read_idx, IMAGES_MAGIC, LABELS_MAGIC};
use super::LabeledDataset;

pub const DEFAULT_DIGITS: [u8; 3] = [1, 3, 4];
pub const DEFAULT_MAX_N: usize = 18_000;

/// Loads digits in `keep_digits` from an IDX image/label pair.
///
/// Pixels are scaled to `[0, 1]`, rows keep file order and are truncated to
/// `max_n`. Labels are re-indexed densely in ascending digit order, so
/// `{1, 3, 4}` become `{0, 1, 2}`. Fewer than `max_n` matching rows is not an
/// error; everything available is returned with a warning.
pub fn load_mnist_subset(
    images_path: &Path,
    labels_path: &Path,
    keep_digits: &[u8],
    max_n: Option<usize>,
) -> Result<LabeledDataset> {
    if keep_digits.is_empty() {
        return Err(Error::Contract("keep_digits must not be empty".into()));
    }
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.header.magic != IMAGES_MAGIC {
        return Err(Error::Format {
            what: format!("image file {}", images_path.display()),
            reason: format!("magic 0x{:08x}, expected 0x{IMAGES_MAGIC:08x}", images.header.magic),
        });
    }
    if labels.header.magic != LABELS_MAGIC {
        return Err(Error::Format {
            what: format!("label file {}", labels_path.display()),
            reason: format!("magic 0x{:08x}, expected 0x{LABELS_MAGIC:08x}", labels.header.magic),
        });
    }
    let count = images.header.dims[0] as usize;
    if labels.header.dims[0] as usize != count {
        return Err(Error::Format {
            what: "MNIST pair".into(),
            reason: format!("{count} images but {} labels", labels.header.dims[0]),
        });
    }
    let pixels: usize = images.header.dims[1..].iter().map(|&d| d as usize).product();

    let mut digits = keep_digits.to_vec();
    digits.sort_unstable();
    digits.dedup();
    let limit = max_n.unwrap_or(usize::MAX);

    let mut rows = Vec::new();
    let mut dense = Vec::new();
    for (i, &digit) in labels.data.iter().enumerate() {
        if rows.len() == limit {
            break;
        }
        if let Ok(pos) = digits.binary_search(&digit) {
            rows.push(i);
            dense.push(pos);
        }
    }
    if let Some(m) = max_n {
        if rows.len() < m {
            log::warn!(
                "only {} rows with digits {:?} in {}, wanted {m}",
                rows.len(),
                digits,
                labels_path.display()
            );
        }
    }

    let mut x = Matrix::zeros(rows.len(), pixels);
    for (dst, &src) in rows.iter().enumerate() {
        let raw = &images.data[src * pixels..(src + 1) * pixels];
        for (v, &b) in x.row_mut(dst).iter_mut().zip(raw) {
            *v = f64::from(b) / 255.0;
        }
    }
    LabeledDataset::new(x, dense, digits.len(), None)
}

/// Standard MNIST file names inside one directory.
#[derive(Debug, Clone)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn has_train(&self) -> bool {
        self.train_images.is_file() && self.train_labels.is_file()
    }

    pub fn has_test(&self) -> bool {
        self.test_images.is_file() && self.test_labels.is_file()
    }
}

/// Train and test subsets from a directory of standard MNIST files. Without
/// the test files, the training subset is split 90/10 instead.
pub fn load_mnist_dir(
    dir: &Path,
    keep_digits: &[u8],
    max_n: Option<usize>,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let files = MnistFiles::in_dir(dir);
    let train = load_mnist_subset(&files.train_images, &files.train_labels, keep_digits, max_n)?;
    if files.has_test() {
        let test = load_mnist_subset(&files.test_images, &files.test_labels, keep_digits, None)?;
        Ok((train, test))
    } else {
        log::warn!("no MNIST test files in {}, holding out 10% of training rows", dir.display());
        super::split(&train, (0.9, 0.1), seed)
    }
}
