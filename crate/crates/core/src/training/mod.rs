//! Triplet pre-training, model-based policy improvement and the
//! self-critical baseline, plus the percentile reward they all share.

mod config;
mod objectives;
mod reward;
mod trainer;
mod value;

pub use config::{Phase, TrainConfig};
pub use objectives::{nll_episode, replay, triplet_episode};
pub use reward::{compute_return, ranking_percentile, triplet_loss, RewardSpec};
pub use trainer::{
    improvement_batch, improvement_episode, pretrain_sl, scst_batch, sl_batch, BatchMetrics, EpisodeSeed, EpochMetrics, StepStats,
    TrainEnv, TrainSummary, Trainer,
};
pub use value::{best_action, estimate_action_value};
