use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::{candidate_distribution, CandidateDistribution, SelectionMode};
use super::model::{DialogManager, ManagerConfig, TurnCache};
use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackSource, Utterance};
use crate::nn::Real;
use crate::training::ranking_percentile;

/// Maps one turn of (image feature, feedback tokens) to a new state.
///
/// [`DialogManager`] is the real policy; evaluation stubs implement this too.
pub trait Policy<T: Real = f32> {
    fn dim(&self) -> usize;

    /// Called before each episode. Stubs may peek at the target; the model never does.
    fn begin_episode(&mut self, _target: Option<ItemId>) {}

    /// Returns `(s_t, h_t)`.
    fn step(&self, h_prev: &[T], image: &[T], tokens: &[u32]) -> Result<(Vec<T>, Vec<T>)>;
}

impl<T: Real> Policy<T> for DialogManager<T> {
    fn dim(&self) -> usize {
        DialogManager::dim(self)
    }

    fn step(&self, h_prev: &[T], image: &[T], tokens: &[u32]) -> Result<(Vec<T>, Vec<T>)> {
        let (s, h, _) = self.turn(h_prev, image, tokens)?;
        Ok((s, h))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub horizon: usize,
    pub top_k: usize,
    pub exclude_shown: bool,
}

impl EpisodeOptions {
    pub fn new(config: &ManagerConfig, horizon: usize) -> Self {
        Self {
            horizon,
            top_k: config.top_k,
            exclude_shown: config.exclude_shown,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.top_k == 0 {
            return Err(Error::Config("horizon and top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dialog state after `turn` completed turns.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogState<T = f32> {
    pub h: Vec<T>,
    /// `None` before the first turn.
    pub s: Option<Vec<T>>,
    pub turn: usize,
    pub shown: Vec<ItemId>,
}

impl<T: Real> DialogState<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            h: vec![T::zero(); dim],
            s: None,
            turn: 0,
            shown: Vec::new(),
        }
    }

    fn image(bank: &FeatureBank, candidate: ItemId) -> Result<Vec<T>> {
        Ok(bank.feature(candidate)?.iter().map(|&v| T::of(v as f64)).collect())
    }

    fn apply(&mut self, candidate: ItemId, s: Vec<T>, h: Vec<T>) {
        self.h = h;
        self.s = Some(s);
        self.turn += 1;
        self.shown.push(candidate);
    }

    /// Shows `candidate`, reads the feedback and updates the state.
    pub fn observe<P: Policy<T> + ?Sized>(
        &mut self,
        policy: &P,
        bank: &FeatureBank,
        candidate: ItemId,
        utterance: &Utterance,
    ) -> Result<&[T]> {
        let image = Self::image(bank, candidate)?;
        let (s, h) = policy.step(&self.h, &image, &utterance.tokens)?;
        self.apply(candidate, s, h);
        Ok(self.s.as_deref().unwrap_or_default())
    }

    /// As [`observe`](Self::observe) but keeps what backpropagation needs.
    pub fn observe_cached(
        &mut self,
        manager: &DialogManager<T>,
        bank: &FeatureBank,
        candidate: ItemId,
        utterance: &Utterance,
    ) -> Result<TurnCache<T>> {
        let image = Self::image(bank, candidate)?;
        let (s, h, cache) = manager.turn(&self.h, &image, &utterance.tokens)?;
        self.apply(candidate, s, h);
        Ok(cache)
    }

    /// Top-K distribution for the next candidate.
    pub fn candidates(&self, bank: &FeatureBank, options: &EpisodeOptions) -> Result<CandidateDistribution<T>> {
        let s = self
            .s
            .as_ref()
            .ok_or_else(|| Error::Config("no state before the first turn".into()))?;
        let excluded: &[ItemId] = if options.exclude_shown { &self.shown } else { &[] };
        candidate_distribution(s, bank, options.top_k, excluded)
    }
}

/// Uniform first candidate from the bank.
pub fn first_candidate<R: Rng + ?Sized>(bank: &FeatureBank, rng: &mut R) -> ItemId {
    bank.ids()[rng.random_range(0..bank.len())]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub id: ItemId,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTurn {
    pub candidate: ItemId,
    pub utterance: String,
    pub reward: f64,
    /// Distribution the next candidate was drawn from; empty on the last turn.
    pub topk: Vec<TopK>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub target: ItemId,
    pub turns: Vec<TraceTurn>,
    pub mode: SelectionMode,
    pub seed: u64,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.turns.iter().map(|t| t.reward).collect()
    }

    pub fn candidates(&self) -> Vec<ItemId> {
        self.turns.iter().map(|t| t.candidate).collect()
    }
}

pub fn write_traces<W: Write>(mut out: W, traces: &[EpisodeTrace]) -> std::io::Result<()> {
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_traces<R: BufRead>(input: R) -> Result<Vec<EpisodeTrace>> {
    let mut traces = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("trace stream", e))?;
        if line.trim().is_empty() {
            continue;
        }
        traces.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?);
    }
    Ok(traces)
}

/// One full dialog of `horizon` turns toward `target`, seeded by `seed`.
///
/// Rewards rank the target over `bank`, which is also the candidate pool.
pub fn run_episode<T: Real, P: Policy<T> + ?Sized>(
    policy: &mut P,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    target: ItemId,
    options: &EpisodeOptions,
    mode: SelectionMode,
    seed: u64,
) -> Result<EpisodeTrace> {
    options.validate()?;
    if !bank.contains(target) {
        return Err(Error::InvalidItem(target));
    }
    policy.begin_episode(Some(target));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DialogState::<T>::new(policy.dim());
    let mut candidate = first_candidate(bank, &mut rng);
    let mut turns = Vec::with_capacity(options.horizon);
    for t in 1..=options.horizon {
        let utterance = feedback.feedback(target, candidate)?;
        let s = state.observe(&*policy, bank, candidate, &utterance)?;
        let reward = ranking_percentile(s, bank, target)?;
        let mut topk = Vec::new();
        let next = if t < options.horizon {
            let dist = state.candidates(bank, options)?;
            topk = dist
                .ids
                .iter()
                .zip(&dist.probs)
                .map(|(&id, p)| TopK { id, prob: p.as_f64() })
                .collect();
            Some(dist.select(mode, &mut rng))
        } else {
            None
        };
        turns.push(TraceTurn {
            candidate,
            utterance: utterance.surface,
            reward,
            topk,
        });
        if let Some(next) = next {
            candidate = next;
        }
    }
    Ok(EpisodeTrace {
        target,
        turns,
        mode,
        seed,
    })
}

/// A training rollout with everything needed for gradients.
#[derive(Clone, Debug)]
pub struct Rollout<T> {
    pub target: ItemId,
    /// `a_1 .. a_T`.
    pub actions: Vec<ItemId>,
    pub rewards: Vec<f64>,
    /// `s_1 .. s_T`.
    pub states: Vec<Vec<T>>,
    pub caches: Vec<TurnCache<T>>,
    /// Distribution after turn `t` that produced `a_{t+1}`; length `T - 1`.
    pub distributions: Vec<CandidateDistribution<T>>,
}

/// Runs the manager from `first`, letting `choose` pick every later candidate
/// from the current state and its top-K distribution.
pub fn rollout<T, F>(
    manager: &DialogManager<T>,
    bank: &FeatureBank,
    feedback: &dyn FeedbackSource,
    target: ItemId,
    first: ItemId,
    options: &EpisodeOptions,
    mut choose: F,
) -> Result<Rollout<T>>
where
    T: Real,
    F: FnMut(&DialogState<T>, &CandidateDistribution<T>) -> Result<ItemId>,
{
    options.validate()?;
    let horizon = options.horizon;
    let mut state = DialogState::new(manager.dim());
    let mut out = Rollout {
        target,
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        states: Vec::with_capacity(horizon),
        caches: Vec::with_capacity(horizon),
        distributions: Vec::with_capacity(horizon.saturating_sub(1)),
    };
    let mut candidate = first;
    for t in 1..=horizon {
        let utterance = feedback.feedback(target, candidate)?;
        let cache = state.observe_cached(manager, bank, candidate, &utterance)?;
        let s = state.s.clone().unwrap_or_default();
        out.rewards.push(ranking_percentile(&s, bank, target)?);
        out.actions.push(candidate);
        out.states.push(s);
        out.caches.push(cache);
        if t < horizon {
            let dist = state.candidates(bank, options)?;
            candidate = choose(&state, &dist)?;
            if dist.position(candidate).is_none() {
                return Err(Error::InvalidItem(candidate));
            }
            out.distributions.push(dist);
        }
    }
    Ok(out)
}
