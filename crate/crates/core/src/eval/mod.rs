//! Per-turn ranking-percentile evaluation on the held-out split, plus
//! comparison tables and turn-curve exports.

mod report;
mod stubs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use report::{
    compare, compare_csv, parse_turn_curve, turn_curve_csv, CompareRow, CurvePoint, EvalReport, RunManifest, COMPARE_HEADER,
    CURVE_HEADER,
};
pub use stubs::{OraclePolicy, RandomStatePolicy};

use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::feedback::FeedbackSource;
use crate::manager::{run_episode, EpisodeOptions, Policy, SelectionMode};
use crate::seed::combine;

/// Default number of evaluation episodes.
pub const DEFAULT_EPISODES: usize = 500;

/// `(target, episode seed)` pairs, drawn with replacement from `bank`.
///
/// Depends only on the bank and `seed`, so every compared configuration sees
/// the same targets and first candidates.
pub fn paired_targets(bank: &FeatureBank, episodes: usize, seed: u64) -> Vec<(ItemId, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(combine(seed, 0xe7a1));
    (0..episodes)
        .map(|i| (bank.ids()[rng.random_range(0..bank.len())], combine(seed, i as u64)))
        .collect()
}

/// Greedy episodes against `feedback`, rewards ranked over `bank` (the test split).
pub fn evaluate<P: Policy + ?Sized>(
    policy: &mut P,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    options: &EpisodeOptions,
    episodes: usize,
    seed: u64,
    config_id: &str,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    if bank.is_empty() {
        return Err(Error::NotEnoughItems { needed: 1, available: 0 });
    }
    let horizon = options.horizon;
    let mut sum = vec![0.0; horizon];
    let mut sq = vec![0.0; horizon];
    for (target, episode_seed) in paired_targets(bank, episodes, seed) {
        let trace = run_episode(policy, bank, feedback, target, options, SelectionMode::Greedy, episode_seed)?;
        for (t, r) in trace.rewards().into_iter().enumerate() {
            sum[t] += r;
            sq[t] += r * r;
        }
    }
    let n = episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
        .collect();
    Ok(EvalReport {
        config_id: config_id.to_string(),
        horizon,
        episodes,
        seed,
        mean,
        std,
    })
}
