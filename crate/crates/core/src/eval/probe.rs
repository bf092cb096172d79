//! Linear probe: one-vs-rest L2-regularized hinge loss trained by SGD on
//! standardized features.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step; epoch `e` uses `lr / (1 + e)`.
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            lr: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes × dim`
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearProbe {
    pub fn fit(feats: &Matrix, labels: &[usize], num_classes: usize, cfg: ProbeConfig, seed: u64) -> Result<Self> {
        if labels.len() != feats.rows() {
            return Err(Error::shape("linear_probe", feats.rows(), labels.len()));
        }
        let mut present = vec![false; num_classes];
        for &l in labels {
            if l >= num_classes {
                return Err(Error::Contract(format!("label {l} outside [0, {num_classes})")));
            }
            present[l] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Contract("linear probe needs at least two classes".into()));
        }

        let d = feats.cols();
        let mean = feats.col_means();
        let n = feats.rows() as f64;
        let mut scale = vec![0.0; d];
        for row in feats.row_iter() {
            for j in 0..d {
                scale[j] += (row[j] - mean[j]).powi(2);
            }
        }
        for s in &mut scale {
            let std = (*s / n).sqrt();
            *s = if std > 1e-12 { 1.0 / std } else { 1.0 };
        }
        let mut probe = Self {
            mean,
            scale,
            weights: Matrix::zeros(num_classes, d),
            bias: vec![0.0; num_classes],
        };
        let x = probe.standardize(feats);

        let mut rng = RunRng::new(seed);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for epoch in 0..cfg.epochs {
            let lr = cfg.lr / (1.0 + epoch as f64);
            rng.shuffle(&mut order);
            for &i in &order {
                let xi = x.row(i);
                for c in 0..num_classes {
                    let y = if labels[i] == c { 1.0 } else { -1.0 };
                    let w = probe.weights.row_mut(c);
                    let margin = y * (w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + probe.bias[c]);
                    let shrink = 1.0 - lr * cfg.lambda;
                    if margin < 1.0 {
                        for (wj, &xj) in w.iter_mut().zip(xi) {
                            *wj = *wj * shrink + lr * y * xj;
                        }
                        probe.bias[c] += lr * y;
                    } else {
                        for wj in w.iter_mut() {
                            *wj *= shrink;
                        }
                    }
                }
            }
        }
        Ok(probe)
    }

    fn standardize(&self, feats: &Matrix) -> Matrix {
        let mut x = feats.clone();
        for i in 0..x.rows() {
            for (j, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.scale[j];
            }
        }
        x
    }

    pub fn predict(&self, feats: &Matrix) -> Result<Vec<usize>> {
        if feats.cols() != self.mean.len() {
            return Err(Error::shape("LinearProbe::predict", self.mean.len(), feats.cols()));
        }
        let x = self.standardize(feats);
        Ok(x
            .row_iter()
            .map(|row| {
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..self.bias.len() {
                    let s = self.weights.row(c).iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + self.bias[c];
                    if s > best.1 {
                        best = (c, s);
                    }
                }
                best.0
            })
            .collect())
    }
}

/// Misclassification rate on the test set of a probe fit on the train set.
pub fn linear_probe(
    train_feats: &Matrix,
    train_labels: &[usize],
    test_feats: &Matrix,
    test_labels: &[usize],
    seed: u64,
) -> Result<f64> {
    if test_labels.len() != test_feats.rows() || test_labels.is_empty() {
        return Err(Error::shape("linear_probe test set", test_feats.rows(), test_labels.len()));
    }
    let classes = train_labels.iter().chain(test_labels).max().map_or(0, |m| m + 1);
    let probe = LinearProbe::fit(train_feats, train_labels, classes, ProbeConfig::default(), seed)?;
    let pred = probe.predict(test_feats)?;
    let wrong = pred.iter().zip(test_labels).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / test_labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64, sep: f64) -> (Matrix, Vec<usize>) {
        let mut rng = RunRng::new(seed);
        let mut x = Matrix::zeros(n, 3);
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let off = if c == 0 { -sep } else { sep };
            x[(i, 0)] = off + 0.3 * rng.normal();
            x[(i, 1)] = rng.normal();
            x[(i, 2)] = 0.5 * rng.normal();
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_have_zero_error() {
        let (x, y) = blobs(200, 1, 3.0);
        let (xt, yt) = blobs(100, 2, 3.0);
        assert_eq!(linear_probe(&x, &y, &xt, &yt, 0).unwrap(), 0.0);
        // memorized training data
        assert_eq!(linear_probe(&x, &y, &x, &y, 0).unwrap(), 0.0);
    }

    #[test]
    fn constant_features_fall_back_to_majority() {
        let x = Matrix::filled(100, 2, 3.0);
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 60)).collect();
        let err = linear_probe(&x, &y, &x, &y, 0).unwrap();
        assert!((err - 0.4).abs() < 1e-12, "{err}");
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::zeros(4, 2);
        assert!(matches!(linear_probe(&x, &[1, 1, 1, 1], &x, &[1, 1, 1, 1], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn error_is_a_fraction() {
        let (x, y) = blobs(100, 3, 0.1);
        let (xt, yt) = blobs(100, 4, 0.1);
        let e = linear_probe(&x, &y, &xt, &yt, 1).unwrap();
        assert!((0.0..=1.0).contains(&e));
    }
}
