//! The policy network (response encoder, state tracker, candidate generator)
//! and the turn loop that drives it against a feedback source.

mod distribution;
mod episode;
mod model;

pub use distribution::{candidate_distribution, CandidateDistribution, SelectionMode};
pub use episode::{
    first_candidate, read_traces, rollout, run_episode, write_traces, DialogState, EpisodeOptions, EpisodeTrace,
    Policy, Rollout, TopK, TraceTurn,
};
pub use model::{DialogManager, ManagerConfig, TurnCache};
