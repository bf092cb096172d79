//! Datasets: the 25-component Gaussian mixture, MNIST subsets, splitting
//! and minibatching.

mod gmm;
pub mod idx;
mod io;
mod mnist;

pub use gmm::{gen_gmm, gen_gmm_samples, grid_centers, GMM_COMPONENTS, GMM_PER_COMPONENT, GMM_VARIANCE};
pub use io::{read_dataset_csv, write_dataset_csv, DatasetMeta};
pub use mnist::{load_mnist_dir, load_mnist_subset, MnistFiles, DEFAULT_DIGITS, DEFAULT_MAX_N};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RunRng;

/// Rows of features with a class (or mixture component) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// True component means, present for generated mixtures.
    pub centers: Option<Matrix>,
}

impl LabeledDataset {
    pub fn new(x: Matrix, labels: Vec<usize>, num_classes: usize, centers: Option<Matrix>) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape("LabeledDataset", format!("{} labels", x.rows()), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Contract(format!("label {bad} outside [0, {num_classes})")));
        }
        if let Some(c) = &centers {
            if c.rows() != num_classes || c.cols() != x.cols() {
                return Err(Error::shape(
                    "LabeledDataset centers",
                    format!("{num_classes}x{}", x.cols()),
                    format!("{:?}", c.shape()),
                ));
            }
        }
        Ok(Self {
            x,
            labels,
            num_classes,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            centers: self.centers.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Stratified split into `(train, test)` with `train_fraction + test_fraction == 1`.
///
/// Each class is shuffled with the seed and cut contiguously; every class
/// with at least two rows lands in both parts. The parts are then shuffled.
pub fn split(ds: &LabeledDataset, fractions: (f64, f64), seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_frac, test_frac) = fractions;
    if !(train_frac > 0.0 && test_frac > 0.0) || ((train_frac + test_frac) - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "split fractions must be positive and sum to 1, got ({train_frac}, {test_frac})"
        )));
    }
    let mut rng = RunRng::new(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rows in &mut by_class {
        if rows.is_empty() {
            continue;
        }
        rng.shuffle(rows);
        let mut cut = (train_frac * rows.len() as f64).round() as usize;
        if rows.len() >= 2 {
            cut = cut.clamp(1, rows.len() - 1);
        }
        train.extend_from_slice(&rows[..cut]);
        test.extend_from_slice(&rows[cut..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Contract("split produced an empty part".into()));
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut test);
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Index slices for one epoch: a seeded shuffle of `0..n` cut into runs of
/// `batch_size`, keeping the final short batch.
pub fn batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    RunRng::derived(seed, epoch).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_arithmetic_and_partition() {
        let b = batches(5000, 512, 1, 0);
        assert_eq!(b.len(), 10);
        assert_eq!(b.last().unwrap().len(), 392);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..5000).collect::<Vec<_>>());
        assert_eq!(b, batches(5000, 512, 1, 0));
        assert_ne!(b, batches(5000, 512, 1, 1));
    }

    #[test]
    fn split_sizes_and_stratification() {
        let ds = gen_gmm(3);
        let (train, test) = split(&ds, (0.8, 0.2), 9).unwrap();
        assert_eq!((train.len(), test.len()), (4000, 1000));
        assert!(train.class_counts().iter().all(|&c| c > 0));
        assert!(test.class_counts().iter().all(|&c| c > 0));
        let again = split(&ds, (0.8, 0.2), 9).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, test);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = gen_gmm(3);
        assert!(split(&ds, (0.8, 0.3), 0).is_err());
        assert!(split(&ds, (1.0, 0.0), 0).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        assert!(LabeledDataset::new(Matrix::zeros(2, 1), vec![0, 3], 3, None).is_err());
        assert!(LabeledDataset::new(Matrix::zeros(2, 1), vec![0], 3, None).is_err());
    }
}
