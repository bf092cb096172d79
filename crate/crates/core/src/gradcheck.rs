//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::rng::RunRng;

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Step as a fraction of parameter scale: `h = rel_step * max(|θ|, 1)`.
    pub rel_step: f64,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is zero are judged on an absolute scale.
    pub floor: f64,
    /// Check at most this many coordinates, sampled without replacement.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-5,
            floor: 1e-8,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// `loss` must be deterministic; any noise it uses has to be frozen by the
/// caller.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    analytic: &[f64],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if params.len() != analytic.len() {
        return Err(Error::shape("grad_check", params.len(), analytic.len()));
    }
    let mut coords: Vec<usize> = (0..params.len()).collect();
    if let Some(limit) = opts.max_coords {
        if limit < coords.len() {
            let mut rng = RunRng::new(opts.seed);
            rng.shuffle(&mut coords);
            coords.truncate(limit);
            coords.sort_unstable();
        }
    }

    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for &i in &coords {
        let orig = theta[i];
        let h = opts.rel_step * orig.abs().max(1.0);
        theta[i] = orig + h;
        let plus = loss(&theta)?;
        theta[i] = orig - h;
        let minus = loss(&theta)?;
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric {
                context: format!("grad_check loss at coordinate {i}: f(+h)={plus}, f(-h)={minus}"),
            });
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > report.max_rel_err || report.checked == 0 {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(|t| Ok(0.5 * t[0] * t[0]), &[3.0], &[3.0], GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_err < 1e-9, "{r:?}");
        assert!((r.numeric - 3.0).abs() < 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let params = [0.4f64, -1.2, 2.0];
        let f = |t: &[f64]| Ok(t.iter().map(|v| v.sin() + v * v).sum::<f64>());
        let good: Vec<f64> = params.iter().map(|v| v.cos() + 2.0 * v).collect();
        let bad: Vec<f64> = good.iter().map(|g| g * 1.1).collect();
        let ok = grad_check(f, &params, &good, GradCheckOptions::default()).unwrap();
        assert!(ok.max_rel_err < 1e-7);
        let r = grad_check(f, &params, &bad, GradCheckOptions::default()).unwrap();
        // |1.1g - g| / 1.1|g|
        assert!((r.max_rel_err - 0.1 / 1.1).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let r = grad_check(|t| Ok(t[0].ln()), &[0.0], &[1.0], GradCheckOptions::default());
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn subsampling_respects_limit() {
        let p = vec![1.0; 100];
        let g = vec![2.0; 100];
        let r = grad_check(
            |t| Ok(t.iter().map(|v| v * v).sum()),
            &p,
            &g,
            GradCheckOptions {
                max_coords: Some(10),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.checked, 10);
    }
}
