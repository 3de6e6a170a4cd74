use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Corpus, FineFeatures, ItemDescriptor, ItemId, NUM_ATTRIBUTES};
use crate::error::{Error, Result};

/// Frozen image encoder: one-hot fine features and coarse scores, a fixed
/// seeded Gaussian projection to `dim`, then `tanh`.
#[derive(Clone, Debug)]
pub struct FeatureEncoder {
    dim: usize,
    seed: u64,
    projection: Vec<f32>,
}

impl FeatureEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let width = Self::input_width();
        // about eight active inputs per item; keep pre-activations near unit scale
        let scale = 1.0 / 8f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * width)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Self { dim, seed, projection }
    }

    pub fn input_width() -> usize {
        FineFeatures::one_hot_width() + NUM_ATTRIBUTES
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode(&self, item: &ItemDescriptor) -> Vec<f32> {
        let width = Self::input_width();
        let mut input = vec![0.0f32; width];
        item.fine.write_one_hot(&mut input);
        input[FineFeatures::one_hot_width()..].copy_from_slice(&item.coarse);
        self.projection
            .chunks_exact(width)
            .map(|row| {
                let a: f32 = row.iter().zip(&input).map(|(w, x)| w * x).sum();
                a.tanh()
            })
            .collect()
    }

    /// Feature of item `id`.
    pub fn img_enc(&self, corpus: &Corpus, id: ItemId) -> Result<Vec<f32>> {
        Ok(self.encode(corpus.item(id)?))
    }
}

/// Frozen `rows x dim` matrix of item features with the item id of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    projection_seed: u64,
    ids: Vec<ItemId>,
    rows: Vec<f32>,
    row_of: Vec<Option<usize>>,
}

impl FeatureBank {
    /// Row `i` is the feature of item `i`, for every item of the corpus.
    pub fn build(corpus: &Corpus, encoder: &FeatureEncoder) -> Self {
        let mut rows = Vec::with_capacity(corpus.len() * encoder.dim());
        for item in &corpus.items {
            rows.extend(encoder.encode(item));
        }
        Self::assemble(encoder.dim(), encoder.seed(), (0..corpus.len()).collect(), rows)
    }

    /// A bank over explicit feature rows, `rows[r * dim..][..dim]` belonging to `ids[r]`.
    pub fn from_rows(dim: usize, ids: Vec<ItemId>, rows: Vec<f32>) -> Result<Self> {
        if dim == 0 || rows.len() != ids.len() * dim {
            return Err(Error::shape("feature bank rows", &[ids.len(), dim], &[rows.len()]));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidCorpus(format!("duplicate item id {} in feature bank", w[0])));
        }
        Ok(Self::assemble(dim, 0, ids, rows))
    }

    fn assemble(dim: usize, projection_seed: u64, ids: Vec<ItemId>, rows: Vec<f32>) -> Self {
        let max_id = ids.iter().copied().max().unwrap_or(0);
        let mut row_of = vec![None; max_id + 1];
        for (r, &id) in ids.iter().enumerate() {
            row_of[id] = Some(r);
        }
        Self {
            dim,
            projection_seed,
            ids,
            rows,
            row_of,
        }
    }

    /// Restricts the bank to `ids`, keeping their order.
    pub fn subset(&self, ids: &[ItemId]) -> Result<Self> {
        let mut rows = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            rows.extend_from_slice(self.feature(id)?);
        }
        Ok(Self::assemble(self.dim, self.projection_seed, ids.to_vec(), rows))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projection_seed(&self) -> u64 {
        self.projection_seed
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.rows[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_index(&self, id: ItemId) -> Option<usize> {
        self.row_of.get(id).copied().flatten()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.row_index(id).is_some()
    }

    pub fn feature(&self, id: ItemId) -> Result<&[f32]> {
        self.row_index(id).map(|r| self.row(r)).ok_or(Error::InvalidItem(id))
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|v| v.is_finite())
    }
}
