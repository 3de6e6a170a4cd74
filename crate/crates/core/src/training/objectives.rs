//! Per-episode losses and their gradients.
//!
//! Every function adds `weight ·` its loss gradient into `grads` and returns
//! the weighted loss, so batches are built by summing episodes.

use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::feedback::FeedbackSource;
use crate::manager::{rollout, DialogManager, EpisodeOptions, Rollout};
use crate::nn::{Gradients, Real};

use super::reward::triplet_loss;

/// Re-runs a recorded action sequence under the current parameters.
///
/// Fails if a recorded action is no longer in the top-K set.
pub fn replay<T: Real>(
    manager: &DialogManager<T>,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    target: ItemId,
    actions: &[ItemId],
    options: &EpisodeOptions,
) -> Result<Rollout<T>> {
    if actions.len() != options.horizon {
        return Err(Error::shape("action sequence", &[options.horizon], &[actions.len()]));
    }
    rollout(manager, bank, feedback, target, actions[0], options, |state, _| Ok(actions[state.turn]))
}

fn row<T: Real>(bank: &FeatureBank, id: ItemId) -> Result<Vec<T>> {
    Ok(bank.feature(id)?.iter().map(|&v| T::of(v as f64)).collect())
}

/// `Σ_t max(0, ‖s_t − x_target‖ − ‖s_t − x_neg_t‖ + m)`.
pub fn triplet_episode<T: Real>(
    manager: &DialogManager<T>,
    bank: &FeatureBank,
    episode: &Rollout<T>,
    negatives: &[ItemId],
    margin: T,
    weight: T,
    grads: &mut Gradients<T>,
) -> Result<T> {
    if negatives.len() != episode.states.len() {
        return Err(Error::shape("negatives", &[episode.states.len()], &[negatives.len()]));
    }
    let positive = row::<T>(bank, episode.target)?;
    let mut total = T::zero();
    let mut ds = Vec::with_capacity(negatives.len());
    for (s, &neg) in episode.states.iter().zip(negatives) {
        let (loss, grad) = triplet_loss(s, &positive, &row::<T>(bank, neg)?, margin);
        total += loss;
        ds.push(match grad {
            Some(g) => g.into_iter().map(|v| v * weight).collect(),
            None => vec![T::zero(); s.len()],
        });
    }
    manager.backward_episode(&episode.caches, &ds, grads);
    Ok(total * weight)
}

/// `Σ_t −log π(label_t | h_t)` over the turns that produced a next candidate.
pub fn nll_episode<T: Real>(
    manager: &DialogManager<T>,
    bank: &FeatureBank,
    episode: &Rollout<T>,
    labels: &[ItemId],
    weight: T,
    grads: &mut Gradients<T>,
) -> Result<T> {
    if labels.len() != episode.distributions.len() {
        return Err(Error::shape("labels", &[episode.distributions.len()], &[labels.len()]));
    }
    let dim = manager.dim();
    let mut total = T::zero();
    let mut ds = vec![vec![T::zero(); dim]; episode.states.len()];
    for (t, (dist, &label)) in episode.distributions.iter().zip(labels).enumerate() {
        total += dist.nll(label).ok_or(Error::InvalidItem(label))?;
        dist.accumulate_nll_grad(&episode.states[t], bank, label, weight, &mut ds[t]);
    }
    manager.backward_episode(&episode.caches, &ds, grads);
    Ok(total * weight)
}
