//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{GradBuffer, ParamSet};
use crate::{Error, Result};

/// `|a − n| / max(1, |a|, |n|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Central differences of a scalar function of a flat vector.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let plus = f(&probe);
            probe[i] = x[i] - step;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many entries per parameter tensor (chosen with
    /// `seed`); `None` checks every entry.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-6,
            max_entries_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub per_param: Vec<(String, f64)>,
    pub entries_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the analytic gradients returned by `model` against central finite
/// differences of its loss, parameter by parameter.
///
/// `model` maps parameter values to `(loss, gradient)`.
pub fn gradient_check<F>(model: F, params: &ParamSet, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<(f64, GradBuffer)>,
{
    let (loss, analytic) = model(params)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss} at the check point")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        per_param: Vec::with_capacity(params.len()),
        entries_checked: 0,
        tolerance: opts.tolerance,
        passed: true,
    };
    let loss_at = |ps: &ParamSet| -> Result<f64> {
        let (l, _) = model(ps)?;
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {l} while probing")));
        }
        Ok(l)
    };
    for id in params.ids() {
        let n = params.value(id).len();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut worst_here = 0.0f64;
        for i in entries {
            let orig = params.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = orig + opts.step;
            let plus = loss_at(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig - opts.step;
            let minus = loss_at(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = rel_err(analytic.get(id).data()[i], numeric);
            report.entries_checked += 1;
            worst_here = worst_here.max(err);
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = err;
                report.worst = Some((params.param(id).name.clone(), i));
            }
        }
        report.per_param.push((params.param(id).name.clone(), worst_here));
    }
    report.passed = report.max_rel_err < opts.tolerance;
    Ok(report)
}
