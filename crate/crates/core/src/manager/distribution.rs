use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::nn::{distance_to_row, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Sample from the top-K softmax (training).
    Stochastic,
    /// Take the most probable candidate (inference).
    Greedy,
}

/// Softmax over the K nearest eligible bank rows, `π_j ∝ exp(−d_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateDistribution<T = f32> {
    /// Item ids, nearest first.
    pub ids: Vec<ItemId>,
    /// Bank row of each id.
    pub rows: Vec<usize>,
    pub distances: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Real> CandidateDistribution<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn prob_of(&self, id: ItemId) -> Option<T> {
        self.position(id).map(|k| self.probs[k])
    }

    /// Most probable candidate; ties go to the lower id.
    pub fn argmax(&self) -> ItemId {
        let mut best = 0;
        for k in 1..self.len() {
            let (p, q) = (self.probs[k], self.probs[best]);
            if p > q || (p == q && self.ids[k] < self.ids[best]) {
                best = k;
            }
        }
        self.ids[best]
    }

    pub fn select<R: Rng + ?Sized>(&self, mode: SelectionMode, rng: &mut R) -> ItemId {
        match mode {
            SelectionMode::Greedy => self.argmax(),
            SelectionMode::Stochastic => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in self.probs.iter().enumerate() {
                    acc += p.as_f64();
                    if u < acc {
                        return self.ids[k];
                    }
                }
                self.ids[self.len() - 1]
            }
        }
    }

    /// Adds `coef · ∂(−log π(chosen))/∂s` to `ds`.
    ///
    /// With logits `−d_k`, `∂(−log π_a)/∂d_k = 1[k = a] − π_k` and
    /// `∂d_k/∂s = (s − x_k) / d_k`.
    pub fn accumulate_nll_grad(&self, s: &[T], bank: &FeatureBank, chosen: ItemId, coef: T, ds: &mut [T]) {
        let a = self.position(chosen).expect("chosen action is in the candidate set");
        for k in 0..self.len() {
            let indicator = if k == a { T::one() } else { T::zero() };
            let dd = coef * (indicator - self.probs[k]);
            let d = self.distances[k];
            if dd == T::zero() || d <= T::of(1e-12) {
                continue;
            }
            let row = bank.row(self.rows[k]);
            for (g, (&si, &x)) in ds.iter_mut().zip(s.iter().zip(row)) {
                *g += dd * (si - T::of(x as f64)) / d;
            }
        }
    }

    /// `−log π(chosen)`.
    pub fn nll(&self, chosen: ItemId) -> Option<T> {
        self.prob_of(chosen).map(|p| -p.ln())
    }
}

/// Top-K softmax over bank rows whose item is not in `excluded`.
///
/// Rows are ordered by distance, ties by lower id.
pub fn candidate_distribution<T: Real>(
    s: &[T],
    bank: &FeatureBank,
    k: usize,
    excluded: &[ItemId],
) -> Result<CandidateDistribution<T>> {
    if k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    if s.len() != bank.dim() {
        return Err(Error::shape("state", &[bank.dim()], &[s.len()]));
    }
    // keep a sorted buffer of the k best (distance, id, row)
    let mut best: Vec<(T, ItemId, usize)> = Vec::with_capacity(k + 1);
    let mut eligible = 0;
    for (row, &id) in bank.ids().iter().enumerate() {
        if excluded.contains(&id) {
            continue;
        }
        eligible += 1;
        let d = distance_to_row(s, bank.row(row));
        let worse = |e: &(T, ItemId, usize)| e.0 > d || (e.0 == d && e.1 > id);
        if best.len() == k && !worse(&best[k - 1]) {
            continue;
        }
        let at = best.iter().position(worse).unwrap_or(best.len());
        best.insert(at, (d, id, row));
        best.truncate(k);
    }
    if eligible < k {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: eligible,
        });
    }
    let min_d = best[0].0;
    let weights: Vec<T> = best.iter().map(|e| (min_d - e.0).exp()).collect();
    let total: T = weights.iter().copied().sum();
    Ok(CandidateDistribution {
        ids: best.iter().map(|e| e.1).collect(),
        rows: best.iter().map(|e| e.2).collect(),
        distances: best.iter().map(|e| e.0).collect(),
        probs: weights.into_iter().map(|w| w / total).collect(),
    })
}
