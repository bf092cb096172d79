use crate::matrix::Matrix;
use crate::rng::RunRng;

use super::LabeledDataset;

pub const GMM_COMPONENTS: usize = 25;
pub const GMM_PER_COMPONENT: usize = 200;
/// Per-axis variance of every component.
pub const GMM_VARIANCE: f64 = 0.1;

const GRID: [f64; 5] = [-4.0, -2.0, 0.0, 2.0, 4.0];

/// Component means on the 5×5 grid `{-4, -2, 0, 2, 4}²`, x-major.
pub fn grid_centers() -> Matrix {
    let mut c = Matrix::zeros(GMM_COMPONENTS, 2);
    for (a, &gx) in GRID.iter().enumerate() {
        for (b, &gy) in GRID.iter().enumerate() {
            let r = c.row_mut(a * GRID.len() + b);
            r[0] = gx;
            r[1] = gy;
        }
    }
    c
}

/// `per_component` draws from each of the 25 components, grouped by
/// component, drawn from `rng`.
pub fn gen_gmm_samples(rng: &mut RunRng, per_component: usize) -> LabeledDataset {
    let centers = grid_centers();
    let std = GMM_VARIANCE.sqrt();
    let n = GMM_COMPONENTS * per_component;
    let mut x = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..GMM_COMPONENTS {
        for s in 0..per_component {
            let row = x.row_mut(c * per_component + s);
            row[0] = centers[(c, 0)] + std * rng.normal();
            row[1] = centers[(c, 1)] + std * rng.normal();
            labels.push(c);
        }
    }
    LabeledDataset {
        x,
        labels,
        num_classes: GMM_COMPONENTS,
        centers: Some(centers),
    }
}

/// The 5000-row toy dataset: 200 samples from each of 25 isotropic
/// Gaussians with covariance `0.1 I`.
pub fn gen_gmm(seed: u64) -> LabeledDataset {
    gen_gmm_samples(&mut RunRng::new(seed), GMM_PER_COMPONENT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_counts() {
        let ds = gen_gmm(0);
        assert_eq!(ds.len(), 5000);
        assert_eq!(ds.dim(), 2);
        assert!(ds.class_counts().iter().all(|&c| c == 200));
    }

    #[test]
    fn per_component_moments() {
        let ds = gen_gmm(0);
        let centers = ds.centers.as_ref().unwrap();
        for c in 0..GMM_COMPONENTS {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
            let sub = ds.x.select_rows(&rows);
            let mean = sub.col_means();
            for d in 0..2 {
                assert!((mean[d] - centers[(c, d)]).abs() < 0.1, "component {c} mean {mean:?}");
                let var = sub.row_iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / (rows.len() - 1) as f64;
                assert!((0.07..=0.13).contains(&var), "component {c} var {var}");
            }
        }
    }

    #[test]
    fn reproducible() {
        let a = gen_gmm(42);
        let b = gen_gmm(42);
        assert!(a.x.as_slice().iter().zip(b.x.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a.x, gen_gmm(43).x);
    }

    #[test]
    fn grid_mean_norm() {
        let c = grid_centers();
        let mean: f64 = c.row_iter().map(|r| r[0].hypot(r[1])).sum::<f64>() / 25.0;
        // brute-force enumeration of the 25 grid norms
        assert!((mean - 3.748_728_525_478_037).abs() < 1e-12, "{mean}");
    }
}
