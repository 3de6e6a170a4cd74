use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, OptimizerConfig, RmsPropConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Triplet-loss pre-training.
    Sl,
    /// Model-based policy improvement.
    Mbpi,
    /// Self-critical policy gradient.
    Scst,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Sl => "sl",
            Phase::Mbpi => "mbpi",
            Phase::Scst => "scst",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sl" => Ok(Phase::Sl),
            "mbpi" => Ok(Phase::Mbpi),
            "scst" => Ok(Phase::Scst),
            other => Err(Error::Config(format!("unknown phase `{other}` (expected sl, mbpi or scst)"))),
        }
    }

    pub fn default_optimizer(self) -> OptimizerConfig {
        match self {
            Phase::Sl => OptimizerConfig::Adam(AdamConfig::default()),
            Phase::Mbpi | Phase::Scst => OptimizerConfig::RmsProp(RmsPropConfig::default()),
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            Phase::Sl => 30,
            Phase::Mbpi | Phase::Scst => 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub phase: Phase,
    /// Defaults to 30 for `sl` and 10 otherwise.
    pub epochs: Option<usize>,
    pub episodes_per_epoch: usize,
    pub batch_size: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub margin: f64,
    /// Probability of continuing an improvement episode with a sampled action
    /// instead of the look-ahead best one.
    pub epsilon: f64,
    /// Defaults to Adam for `sl` and RMSprop otherwise.
    pub optimizer: Option<OptimizerConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase: Phase::Sl,
            epochs: None,
            episodes_per_epoch: 1000,
            batch_size: 16,
            horizon: 5,
            gamma: 1.0,
            margin: 0.1,
            epsilon: 0.2,
            optimizer: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_phase(phase: Phase) -> Self {
        Self {
            phase,
            ..Self::default()
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.phase.default_epochs())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        self.optimizer.unwrap_or_else(|| self.phase.default_optimizer())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.episodes_per_epoch == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "batch_size, episodes_per_epoch and horizon must be at least 1".into(),
            ));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::Config(format!("margin {} must be positive", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} not in [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        if self.optimizer().lr().is_nan() || self.optimizer().lr() < 0.0 {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}
