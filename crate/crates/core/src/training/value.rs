use crate::corpus::{FeatureBank, ItemId};
use crate::error::Result;
use crate::feedback::FeedbackSource;
use crate::manager::{CandidateDistribution, DialogState, EpisodeOptions, Policy};
use crate::nn::Real;

use super::reward::ranking_percentile;

/// Look-ahead value of presenting `action` next from `state`.
///
/// One rollout: show `action`, then follow the greedy policy to the horizon,
/// summing `γ^(t'-t) r_t'`. The simulator is deterministic, so a single
/// trajectory is exact.
#[allow(clippy::too_many_arguments)]
pub fn estimate_action_value<T: Real, P: Policy<T> + ?Sized>(
    policy: &P,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    target: ItemId,
    state: &DialogState<T>,
    action: ItemId,
    options: &EpisodeOptions,
    gamma: f64,
) -> Result<f64> {
    let mut state = state.clone();
    let mut candidate = action;
    let mut value = 0.0;
    let mut discount = 1.0;
    loop {
        let utterance = feedback.feedback(target, candidate)?;
        let s = state.observe(policy, bank, candidate, &utterance)?;
        value += discount * ranking_percentile(s, bank, target)?;
        discount *= gamma;
        if state.turn >= options.horizon {
            return Ok(value);
        }
        candidate = state.candidates(bank, options)?.argmax();
    }
}

/// Values of every top-K action and the best one (ties to the lower id).
#[allow(clippy::too_many_arguments)]
pub fn best_action<T: Real, P: Policy<T> + ?Sized>(
    policy: &P,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    target: ItemId,
    state: &DialogState<T>,
    dist: &CandidateDistribution<T>,
    options: &EpisodeOptions,
    gamma: f64,
) -> Result<(ItemId, Vec<f64>)> {
    let mut values = Vec::with_capacity(dist.len());
    for &a in &dist.ids {
        values.push(estimate_action_value(policy, bank, feedback, target, state, a, options, gamma)?);
    }
    let mut best = 0;
    for k in 1..values.len() {
        if values[k] > values[best] || (values[k] == values[best] && dist.ids[k] < dist.ids[best]) {
            best = k;
        }
    }
    Ok((dist.ids[best], values))
}
