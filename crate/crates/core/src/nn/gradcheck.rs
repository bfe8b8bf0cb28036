//! Central finite-difference gradient checking.

use serde::Serialize;

use super::tensor::Params;
use crate::error::Result;

/// Relative-error floor so vanishing gradients compare absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries whose perturbation crossed a non-differentiable point
    /// (relu at zero, a max-pool switch).
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` for every entry of
/// every parameter of `model`.
///
/// An entry is treated as a kink and skipped when the one-sided slopes
/// disagree by more than the analytic/central discrepancy, which is what a
/// crossing of a piecewise-linear boundary produces; smooth errors do not.
pub fn grad_check<P, F>(model: &P, analytic: &P, loss: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    P: Params,
    F: Fn(&P) -> Result<f64>,
{
    let base = loss(model)?;
    let mut probe = model.clone();
    let grads = analytic.params();
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    for (k, (name, g)) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let orig = model.params()[k].1.data()[idx];
            let set = |p: &mut P, v: f64| p.params_mut()[k].1.data_mut()[idx] = v;
            set(&mut probe, orig + eps);
            let plus = loss(&probe)?;
            set(&mut probe, orig - eps);
            let minus = loss(&probe)?;
            set(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = g.data()[idx];
            let rel = rel_error(a, numeric);
            if rel > tol {
                let one_sided_gap = ((plus - base) / eps - (base - minus) / eps).abs();
                if one_sided_gap >= (a - numeric).abs() {
                    report.skipped_kinks += 1;
                    continue;
                }
                report.failures.push(GradMismatch {
                    param: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
        }
    }
    Ok(report)
}
