//! Central finite-difference verification of analytic gradients.

use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Relative error per parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)` with L2 norms taken over the tensor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(1e-8);
    diff / scale
}

/// Compares the analytic gradient returned by `model` with central
/// differences `(f(θ+ε) - f(θ-ε)) / 2ε`, element by element.
///
/// `model` must be a deterministic function of the parameters and return the
/// loss together with its gradient.
pub fn grad_check<F>(params: &ParamSet<f64>, eps: f64, mut model: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<(f64, Gradients<f64>)>,
{
    let (loss, analytic) = model(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("{loss}")));
    }
    let mut probe = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    for id in params.ids() {
        let len = params.value(id).len();
        let mut numeric = vec![0.0; len];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = params.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = orig + eps;
            let plus = model(&probe)?.0;
            probe.value_mut(id).data_mut()[k] = orig - eps;
            let minus = model(&probe)?.0;
            probe.value_mut(id).data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss(params.name(id).to_string()));
            }
            *slot = (plus - minus) / (2.0 * eps);
        }
        let err = relative_error(analytic.get(id).data(), &numeric);
        per_param.push((params.name(id).to_string(), err));
    }
    Ok(GradCheckReport { per_param })
}
