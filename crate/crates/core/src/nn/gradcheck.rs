//! Central-difference gradient checking in 64-bit.
//!
//! Perturbations that flip the sign of any activation input are reported as
//! skipped: the loss is only piecewise smooth there, so the central
//! difference is not an estimate of the derivative.

use crate::Result;

/// A scalar loss over a flat parameter vector.
pub trait Objective {
    fn num_params(&self) -> usize;

    /// Loss value and a fingerprint of the activation pattern (which
    /// piecewise-linear region the forward pass is in).
    fn loss(&self, params: &[f64]) -> Result<(f64, u64)>;

    /// Reverse-mode gradient of [`Objective::loss`].
    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<usize>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `obj.gradient` against central differences with step `eps`.
pub fn grad_check(obj: &impl Objective, params: &[f64], eps: f64) -> Result<GradCheckReport> {
    let analytic = obj.gradient(params)?;
    grad_check_against(obj, params, &analytic, eps)
}

/// Same as [`grad_check`] with a caller-supplied analytic gradient.
pub fn grad_check_against(
    obj: &impl Objective,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, base_pattern) = obj.loss(params)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut probe = params.to_vec();
    for (i, &g) in analytic.iter().enumerate().take(obj.num_params()) {
        let orig = probe[i];
        probe[i] = orig + eps;
        let (plus, pat_plus) = obj.loss(&probe)?;
        probe[i] = orig - eps;
        let (minus, pat_minus) = obj.loss(&probe)?;
        probe[i] = orig;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(g, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_param.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_param = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `L = ½‖A·p − y‖²` for a fixed 3×4 `A`.
    struct LeastSquares {
        a: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares {
        fn residual(&self, p: &[f64]) -> Vec<f64> {
            self.a
                .chunks(4)
                .zip(&self.y)
                .map(|(row, y)| row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - y)
                .collect()
        }
    }

    impl Objective for LeastSquares {
        fn num_params(&self) -> usize {
            4
        }
        fn loss(&self, p: &[f64]) -> Result<(f64, u64)> {
            Ok((0.5 * self.residual(p).iter().map(|r| r * r).sum::<f64>(), 0))
        }
        fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
            let r = self.residual(p);
            Ok((0..4)
                .map(|j| (0..3).map(|i| self.a[i * 4 + j] * r[i]).sum())
                .collect())
        }
    }

    fn model() -> LeastSquares {
        LeastSquares {
            a: vec![
                0.5, -1.0, 2.0, 0.1, 1.5, 0.3, -0.7, 0.9, -0.2, 0.8, 1.1, -1.3,
            ],
            y: vec![0.3, -0.4, 1.0],
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let r = grad_check(&model(), &[0.1, 0.2, -0.3, 0.4], 1e-3).unwrap();
        assert_eq!(r.checked, 4);
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let m = model();
        let p = [0.1, 0.2, -0.3, 0.4];
        let mut g = m.gradient(&p).unwrap();
        g[2] += 0.5;
        let r = grad_check_against(&m, &p, &g, 1e-3).unwrap();
        assert!(r.max_rel_error > 1e-1);
        assert_eq!(r.worst_param, Some(2));
    }
}
