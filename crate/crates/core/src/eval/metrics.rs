use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mean Euclidean distance from each reconstruction to the true mean of the
/// component its input was drawn from.
pub fn mean_distance_to_centers(recons: &Matrix, labels: &[usize], centers: Option<&Matrix>) -> Result<f64> {
    let centers = centers.ok_or_else(|| Error::Contract("distance-to-centers metric needs component centers".into()))?;
    if labels.len() != recons.rows() || centers.cols() != recons.cols() {
        return Err(Error::shape(
            "mean_distance_to_centers",
            format!("{} labels, {} columns", recons.rows(), centers.cols()),
            format!("{} labels, {} columns", labels.len(), recons.cols()),
        ));
    }
    if recons.rows() == 0 {
        return Err(Error::Contract("no reconstructions".into()));
    }
    let mut acc = 0.0;
    for (row, &l) in recons.row_iter().zip(labels) {
        if l >= centers.rows() {
            return Err(Error::Contract(format!("label {l} has no center")));
        }
        let c = centers.row(l);
        acc += row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    Ok(acc / recons.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_gmm;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let centers = Matrix::from_rows(&[[1.0, 1.0], [-2.0, 0.5]]).unwrap();
        let exact = Matrix::from_rows(&[[1.0, 1.0], [-2.0, 0.5]]).unwrap();
        assert_eq!(mean_distance_to_centers(&exact, &[0, 1], Some(&centers)).unwrap(), 0.0);
        let off = Matrix::from_rows(&[[4.0, 5.0]]).unwrap();
        assert_eq!(mean_distance_to_centers(&off, &[0], Some(&centers)).unwrap(), 5.0);
        assert!(matches!(mean_distance_to_centers(&off, &[0], None), Err(Error::Contract(_))));
    }

    #[test]
    fn identity_map_on_raw_data() {
        // E‖N(0, 0.1 I₂)‖ = √0.1 · √(π/2), a Rayleigh mean; 5000 draws give a
        // standard error of about 0.0029
        let ds = gen_gmm(17);
        let e = mean_distance_to_centers(&ds.x, &ds.labels, ds.centers.as_ref()).unwrap();
        let want = 0.1f64.sqrt() * (std::f64::consts::PI / 2.0).sqrt();
        assert!((e - want).abs() < 0.012, "{e} vs {want}");
    }

    proptest! {
        #[test]
        fn translation_invariant(shift in prop::array::uniform2(-50.0f64..50.0), seed in 0u64..20) {
            let ds = gen_gmm(seed);
            let centers = ds.centers.clone().unwrap();
            let recons = ds.x.select_rows(&(0..200).map(|i| i * 25).collect::<Vec<_>>());
            let labels: Vec<usize> = (0..200).map(|i| ds.labels[i * 25]).collect();
            let base = mean_distance_to_centers(&recons, &labels, Some(&centers)).unwrap();
            let moved = |m: &Matrix| {
                let mut m = m.clone();
                for r in 0..m.rows() {
                    for (v, s) in m.row_mut(r).iter_mut().zip(shift) { *v += s; }
                }
                m
            };
            let e = mean_distance_to_centers(&moved(&recons), &labels, Some(&moved(&centers))).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert!((e - base).abs() < 1e-12 * (1.0 + shift[0].abs() + shift[1].abs()));
        }
    }
}
