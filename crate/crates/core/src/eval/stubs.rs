use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::manager::Policy;
use crate::seed::combine;

/// Reference policy whose state is pinned to the target's feature.
#[derive(Clone, Debug)]
pub struct OraclePolicy {
    bank: FeatureBank,
    target: Option<ItemId>,
}

impl OraclePolicy {
    pub fn new(bank: FeatureBank) -> Self {
        Self { bank, target: None }
    }
}

impl Policy for OraclePolicy {
    fn dim(&self) -> usize {
        self.bank.dim()
    }

    fn begin_episode(&mut self, target: Option<ItemId>) {
        self.target = target;
    }

    fn step(&self, h_prev: &[f32], _image: &[f32], _tokens: &[u32]) -> Result<(Vec<f32>, Vec<f32>)> {
        let target = self
            .target
            .ok_or_else(|| Error::Config("oracle policy needs a target".into()))?;
        Ok((self.bank.feature(target)?.to_vec(), h_prev.to_vec()))
    }
}

/// Uninformative policy: a fresh Gaussian state every turn.
#[derive(Debug)]
pub struct RandomStatePolicy {
    dim: usize,
    seed: u64,
    calls: Cell<u64>,
}

impl RandomStatePolicy {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            calls: Cell::new(0),
        }
    }
}

impl Policy for RandomStatePolicy {
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, h_prev: &[f32], _image: &[f32], _tokens: &[u32]) -> Result<(Vec<f32>, Vec<f32>)> {
        let n = self.calls.get();
        self.calls.set(n + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(combine(self.seed, n));
        let s = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok((s, h_prev.to_vec()))
    }
}
