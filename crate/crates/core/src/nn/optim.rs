use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    RmsProp(RmsPropConfig),
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Adam(c) => c.lr,
            OptimizerConfig::RmsProp(c) => c.lr,
        }
    }
}

/// Moment buffers and step counter for one parameter set.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, params: &ParamSet<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.dims()))
                .collect::<Vec<_>>()
        };
        let first = match config {
            OptimizerConfig::Adam(_) => zeros(),
            OptimizerConfig::RmsProp(_) => Vec::new(),
        };
        Self {
            config,
            step: 0,
            first,
            second: zeros(),
        }
    }

    pub fn adam(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self::new(OptimizerConfig::Adam(config), params)
    }

    pub fn rmsprop(config: RmsPropConfig, params: &ParamSet<T>) -> Self {
        Self::new(OptimizerConfig::RmsProp(config), params)
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Parameters are left untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        for id in params.ids() {
            if !params.grads().get(id).is_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        self.step += 1;
        let (values, grads) = params.values_and_grads_mut();
        match self.config {
            OptimizerConfig::Adam(c) => {
                let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
                let bias1 = T::of(1.0 - c.beta1.powf(self.step as f64));
                let bias2 = T::of(1.0 - c.beta2.powf(self.step as f64));
                let (lr, eps) = (T::of(c.lr), T::of(c.eps));
                for (i, value) in values.iter_mut().enumerate() {
                    let g = grads.tensors()[i].data();
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (k, w) in value.data_mut().iter_mut().enumerate() {
                        m[k] = b1 * m[k] + (T::one() - b1) * g[k];
                        v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
                        let m_hat = m[k] / bias1;
                        let v_hat = v[k] / bias2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerConfig::RmsProp(c) => {
                let (decay, lr, eps) = (T::of(c.decay), T::of(c.lr), T::of(c.eps));
                for (i, value) in values.iter_mut().enumerate() {
                    let g = grads.tensors()[i].data();
                    let v = self.second[i].data_mut();
                    for (k, w) in value.data_mut().iter_mut().enumerate() {
                        v[k] = decay * v[k] + (T::one() - decay) * g[k] * g[k];
                        *w -= lr * g[k] / (v[k].sqrt() + eps);
                    }
                }
            }
        }
        grads.zero();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(vec![w])).unwrap();
        p
    }

    fn minimize_quadratic(mut opt: OptimizerState<f64>, mut p: ParamSet<f64>, steps: usize) -> f64 {
        let id = p.id("w").unwrap();
        for _ in 0..steps {
            let w = p.value(id).data()[0];
            p.grads_mut().get_mut(id)[0] = 2.0 * (w - 3.0);
            opt.step(&mut p).unwrap();
        }
        p.value(id).data()[0]
    }

    #[test]
    fn defaults_follow_reported_learning_rates() {
        assert_eq!(AdamConfig::default().lr, 0.001);
        assert_eq!(RmsPropConfig::default().lr, 1e-5);
        assert_eq!(AdamConfig::default().beta1, 0.9);
        assert_eq!(AdamConfig::default().beta2, 0.999);
        assert_eq!(RmsPropConfig::default().decay, 0.99);
    }

    #[test]
    fn zero_gradient_is_identity() {
        for cfg in [
            OptimizerConfig::Adam(AdamConfig::default()),
            OptimizerConfig::RmsProp(RmsPropConfig::default()),
        ] {
            let mut p = scalar_param(1.25);
            let mut opt = OptimizerState::new(cfg, &p);
            for _ in 0..10 {
                opt.step(&mut p).unwrap();
            }
            assert_eq!(p.get("w").unwrap().data(), &[1.25]);
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let p = scalar_param(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let w = minimize_quadratic(OptimizerState::adam(cfg, &p), p, 500);
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn rmsprop_converges_on_quadratic() {
        let p = scalar_param(0.0);
        let cfg = RmsPropConfig {
            lr: 0.01,
            ..Default::default()
        };
        let w = minimize_quadratic(OptimizerState::rmsprop(cfg, &p), p, 2000);
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = scalar_param(0.0);
        let id = p.id("w").unwrap();
        p.grads_mut().get_mut(id)[0] = f64::NAN;
        let mut opt = OptimizerState::adam(AdamConfig::default(), &p);
        match opt.step(&mut p) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.value(id).data(), &[0.0]);
    }

    #[test]
    fn step_zeroes_gradients() {
        let mut p = scalar_param(0.0);
        let id = p.id("w").unwrap();
        p.grads_mut().get_mut(id)[0] = 1.0;
        let mut opt = OptimizerState::rmsprop(RmsPropConfig::default(), &p);
        opt.step(&mut p).unwrap();
        assert!(p.grads().is_zero());
        assert_eq!(opt.steps(), 1);
    }
}
