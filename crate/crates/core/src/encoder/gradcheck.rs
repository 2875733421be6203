use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::seeded;

/// A loss evaluated at one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Hinge arguments; a sign change between `θ − ε` and `θ + ε` marks a
    /// kink inside the finite-difference stencil.
    pub hinge_args: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Denominator floor for relative errors; below it differences count as
/// absolute.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn same_regime(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

/// Compares analytic gradients against central differences on `n_samples`
/// randomly chosen coordinates (all of them if `n_samples >= θ.len()`).
/// Coordinates whose stencil crosses a hinge kink are skipped.
pub fn grad_check<F>(theta: &[f64], loss: F, eps: f64, n_samples: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("step {eps} outside [1e-7, 1e-3]")));
    }
    let base = loss(theta)?;
    if base.grad.len() != theta.len() {
        return Err(Error::invalid("gradient length differs from parameter count"));
    }
    let idx: Vec<usize> = if n_samples >= theta.len() {
        (0..theta.len()).collect()
    } else {
        let mut v = sample(&mut seeded(seed), theta.len(), n_samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut work = theta.to_vec();
    for i in idx {
        work[i] = theta[i] + eps;
        let plus = loss(&work)?;
        work[i] = theta[i] - eps;
        let minus = loss(&work)?;
        work[i] = theta[i];
        if !same_regime(&plus.hinge_args, &minus.hinge_args)
            || !same_regime(&plus.hinge_args, &base.hinge_args)
        {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * eps);
        report.max_rel_error = report.max_rel_error.max(relative_error(base.grad[i], numeric));
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_layer_is_exact() {
        // L = Σ_o c_o (W x + b)_o
        let x = [0.3, -1.2, 2.0];
        let c = [1.5, -0.25];
        let f = |t: &[f64]| {
            let mut value = 0.0;
            let mut grad = vec![0.0; t.len()];
            for o in 0..2 {
                let mut z = t[6 + o];
                for i in 0..3 {
                    z += t[o * 3 + i] * x[i];
                    grad[o * 3 + i] = c[o] * x[i];
                }
                grad[6 + o] = c[o];
                value += c[o] * z;
            }
            Ok(Evaluation {
                value,
                grad,
                hinge_args: Vec::new(),
            })
        };
        let theta: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let r = grad_check(&theta, f, 1e-5, 100, 0).unwrap();
        assert_eq!(r.checked, 8);
        assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
    }

    #[test]
    fn kinks_are_skipped() {
        // |θ0| with θ0 inside the stencil of the kink
        let f = |t: &[f64]| {
            Ok(Evaluation {
                value: t[0].abs(),
                grad: vec![if t[0] > 0.0 { 1.0 } else { -1.0 }],
                hinge_args: vec![t[0]],
            })
        };
        let r = grad_check(&[1e-6], f, 1e-5, 1, 0).unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn step_out_of_range() {
        let f = |_: &[f64]| -> Result<Evaluation> { unreachable!() };
        assert!(grad_check(&[0.0], f, 1e-2, 1, 0).is_err());
    }
}
