//! Principal component projection via the symmetric eigendecomposition of
//! the sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct Pca {
    /// `n × r` scores, `r <= k`.
    pub projection: Matrix,
    /// `r × d`, one unit-norm component per row, largest variance first.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Projects the rows of `z` onto their top `k` principal components.
///
/// Each component's sign is fixed so that its largest-magnitude loading is
/// positive. If the data has rank below `k`, only the available components
/// are returned.
pub fn pca_project(z: &Matrix, k: usize) -> Result<Pca> {
    let (n, d) = z.shape();
    if n <= k || k == 0 {
        return Err(Error::Contract(format!("PCA needs more rows ({n}) than components ({k}) and k > 0")));
    }
    let mean = z.col_means();
    let mut centered = z.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in centered.row_iter() {
        for a in 0..d {
            let ra = row[a];
            for b in a..d {
                cov[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE);
    let rank = order.iter().take_while(|&&i| eig.eigenvalues[i] > tol).count();
    let r = k.min(rank);
    if r < k {
        log::warn!("PCA: data has rank {rank}, returning {r} of {k} components");
    }

    let mut components = Matrix::zeros(r, d);
    let mut eigenvalues = Vec::with_capacity(r);
    for (c, &idx) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(c, j)] = sign * v[j];
        }
        eigenvalues.push(eig.eigenvalues[idx]);
    }

    let mut projection = Matrix::zeros(n, r);
    crate::matrix::gemm(1.0, &centered, crate::matrix::Trans::No, &components, crate::matrix::Trans::Yes, 0.0, &mut projection);
    Ok(Pca {
        projection,
        components,
        eigenvalues,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = RunRng::new(seed);
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                // unequal scales so the eigenvalues separate
                m[(i, j)] = rng.normal() * (j + 1) as f64 + 0.3 * j as f64;
            }
        }
        m
    }

    #[test]
    fn axis_aligned_data_is_unchanged_up_to_sign() {
        let z = Matrix::from_rows(&[[3.0, 0.5], [-3.0, 0.5], [1.0, -0.5], [-1.0, -0.5]]).unwrap();
        let p = pca_project(&z, 2).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert!((p.projection[(i, j)].abs() - z[(i, j)].abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_is_ordered() {
        let p = pca_project(&random(300, 5, 1), 2).unwrap();
        let var = |c: usize| (0..300).map(|i| p.projection[(i, c)].powi(2)).sum::<f64>();
        assert!(var(0) >= var(1));
        assert!(p.eigenvalues[0] >= p.eigenvalues[1]);
    }

    #[test]
    fn full_reconstruction_recovers_centered_data() {
        let z = random(50, 4, 2);
        let p = pca_project(&z, 4).unwrap();
        let back = p.projection.matmul(&p.components).unwrap();
        for i in 0..50 {
            for j in 0..4 {
                assert!((back[(i, j)] + p.mean[j] - z[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn low_rank_returns_fewer_components() {
        let z = Matrix::from_rows(&[[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [3.0, 6.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let p = pca_project(&z, 2).unwrap();
        assert_eq!(p.projection.cols(), 1);
    }

    #[test]
    fn row_permutation_invariant() {
        let z = random(120, 6, 3);
        let mut perm: Vec<usize> = (0..120).collect();
        RunRng::new(4).shuffle(&mut perm);
        let a = pca_project(&z, 2).unwrap();
        let b = pca_project(&z.select_rows(&perm), 2).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..2 {
                assert!((a.projection[(src, c)] - b.projection[(dst, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn needs_more_rows_than_components() {
        assert!(pca_project(&Matrix::zeros(2, 3), 2).is_err());
    }
}
