//! One configuration file for a whole run, and the corpus/banks/simulator it
//! describes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureBank, FeatureEncoder, SplitKind};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_EPISODES;
use crate::feedback::{FeedbackConfig, Grammar, Simulator};
use crate::manager::{EpisodeOptions, ManagerConfig};
use crate::training::{Phase, TrainConfig, TrainEnv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_seed: u64,
    pub corpus_size: usize,
    pub train_fraction: f64,
    pub feature_seed: u64,
    pub manager: ManagerConfig,
    pub feedback: FeedbackConfig,
    /// Shared by every phase; `phase` is set per run.
    pub train: TrainConfig,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus_seed: 0,
            corpus_size: 1200,
            train_fraction: 1000.0 / 1200.0,
            feature_seed: 0,
            manager: ManagerConfig::default(),
            feedback: FeedbackConfig::default(),
            train: TrainConfig::default(),
            eval_episodes: DEFAULT_EPISODES,
            eval_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(Error::json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} not in (0, 1)", self.train_fraction)));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        self.feedback.validate()?;
        self.train.validate()?;
        self.options().validate()
    }

    pub fn options(&self) -> EpisodeOptions {
        EpisodeOptions::new(&self.manager, self.train.horizon)
    }

    pub fn phase(&self, phase: Phase) -> TrainConfig {
        TrainConfig {
            phase,
            ..self.train.clone()
        }
    }

    /// Short label such as `sl-nl` or `mbpi-attr3`.
    pub fn config_id(&self, phase: Phase) -> String {
        format!("{}-{}", phase.name(), self.feedback.label())
    }
}

/// Corpus, split feature banks and simulated user for one configuration.
pub struct World {
    pub corpus: Corpus,
    pub train: FeatureBank,
    pub test: FeatureBank,
    pub sim: Simulator,
}

impl World {
    pub fn generate(config: &ExperimentConfig, grammar: Grammar) -> Result<Self> {
        let corpus = Corpus::generate(config.corpus_seed, config.corpus_size, config.train_fraction)?;
        Self::from_corpus(corpus, config, grammar)
    }

    /// Uses the corpus's own split; the config supplies features and feedback.
    pub fn from_corpus(corpus: Corpus, config: &ExperimentConfig, grammar: Grammar) -> Result<Self> {
        let full = FeatureBank::build(&corpus, &FeatureEncoder::new(config.manager.dim, config.feature_seed));
        let train = full.subset(corpus.ids(SplitKind::Train))?;
        let test = full.subset(corpus.ids(SplitKind::Test))?;
        let sim = Simulator::new(&corpus, grammar, config.feedback.clone())?;
        Ok(Self { corpus, train, test, sim })
    }

    /// A copy of the simulator speaking through another channel.
    pub fn with_feedback(&self, feedback: FeedbackConfig) -> Result<Simulator> {
        Simulator::new(&self.corpus, self.sim.grammar().clone(), feedback)
    }

    pub fn env(&self, options: EpisodeOptions) -> TrainEnv<'_> {
        TrainEnv {
            bank: &self.train,
            feedback: &self.sim,
            options,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.sim.vocab().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"corpus_size": 300, "manager": {"dim": 32}}"#).unwrap();
        assert_eq!(partial.corpus_size, 300);
        assert_eq!(partial.manager.dim, 32);
        assert_eq!(partial.manager.top_k, 3);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        assert_eq!(c.config_id(Phase::Mbpi), "mbpi-nl");
        for name in FeedbackConfig::PRESETS {
            assert_eq!(FeedbackConfig::preset(name).unwrap().label(), name);
        }
    }

    #[test]
    fn world_splits_are_disjoint() {
        let config = ExperimentConfig {
            corpus_size: 120,
            ..ExperimentConfig::default()
        };
        let w = World::generate(&config, Grammar::default()).unwrap();
        assert_eq!(w.train.len() + w.test.len(), 120);
        assert!(w.test.ids().iter().all(|id| !w.train.contains(*id)));
    }
}
