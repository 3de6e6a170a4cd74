//! Deterministic synthetic item universe.

mod descriptor;
mod features;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use descriptor::{
    coarse_base, derive_coarse, Category, Color, Enumerated, FineFeatures, FineField, ItemDescriptor,
    Ornament, Pattern, Position, Toe, ATTRIBUTES, NUM_ATTRIBUTES,
};
pub use features::{FeatureBank, FeatureEncoder};

use crate::error::{Error, Result};

pub type ItemId = usize;

pub const CORPUS_VERSION: u32 = 1;
const MIN_ITEMS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<ItemId>,
    pub test: Vec<ItemId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub seed: u64,
    pub items: Vec<ItemDescriptor>,
    pub split: Split,
}

/// Which half of the split an operation runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
}

fn pick<T: Enumerated, R: Rng>(rng: &mut R) -> T {
    T::ALL[rng.random_range(0..T::ALL.len())]
}

impl Corpus {
    /// Samples `n` items with independent uniform fine features and a seeded
    /// shuffle split; `split_fraction` of the ids (rounded) go to training.
    pub fn generate(seed: u64, n: usize, split_fraction: f64) -> Result<Self> {
        if n < MIN_ITEMS {
            return Err(Error::Config(format!("corpus needs at least {MIN_ITEMS} items, got {n}")));
        }
        if !(split_fraction > 0.0 && split_fraction < 1.0) {
            return Err(Error::Config(format!("split fraction {split_fraction} not in (0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = (0..n)
            .map(|_| {
                let fine = FineFeatures {
                    category: pick(&mut rng),
                    primary_color: pick(&mut rng),
                    accent_color: pick(&mut rng),
                    toe: pick(&mut rng),
                    pattern: pick(&mut rng),
                    ornament: pick(&mut rng),
                    ornament_position: pick(&mut rng),
                };
                let jitter: [f32; NUM_ATTRIBUTES] = std::array::from_fn(|_| rng.random_range(-0.1f32..0.1));
                ItemDescriptor {
                    coarse: derive_coarse(&fine, &jitter),
                    fine,
                }
            })
            .collect();

        let n_train = ((n as f64 * split_fraction).round() as usize).clamp(1, n - 1);
        let mut ids: Vec<ItemId> = (0..n).collect();
        ids.shuffle(&mut rng);
        let mut train = ids[..n_train].to_vec();
        let mut test = ids[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            seed,
            items,
            split: Split { train, test },
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: ItemId) -> Result<&ItemDescriptor> {
        self.items.get(id).ok_or(Error::InvalidItem(id))
    }

    pub fn ids(&self, which: SplitKind) -> &[ItemId] {
        match which {
            SplitKind::Train => &self.split.train,
            SplitKind::Test => &self.split.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.items.len();
        if n < MIN_ITEMS {
            return Err(Error::InvalidCorpus(format!("{n} items, need at least {MIN_ITEMS}")));
        }
        for (id, item) in self.items.iter().enumerate() {
            if let Some(v) = item.coarse.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidCorpus(format!("item {id}: coarse value {v} outside [0, 1]")));
            }
        }
        let mut seen = BTreeSet::new();
        for &id in self.split.train.iter().chain(&self.split.test) {
            if id >= n {
                return Err(Error::InvalidCorpus(format!("split references unknown item {id}")));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidCorpus(format!("item {id} appears twice in the split")));
            }
        }
        if seen.len() != n {
            return Err(Error::InvalidCorpus("split does not cover every item".into()));
        }
        if self.split.train.is_empty() || self.split.test.is_empty() {
            return Err(Error::InvalidCorpus("both split halves must be non-empty".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CorpusFile {
            version: CORPUS_VERSION,
            seed: self.seed,
            n: self.items.len(),
            split: self.split.clone(),
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(id, d)| ItemRecord {
                    id,
                    coarse: d.coarse,
                    fine: d.fine,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("corpus serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CorpusFile = serde_json::from_str(text).map_err(Error::json)?;
        if file.version != CORPUS_VERSION {
            return Err(Error::InvalidCorpus(format!("unsupported version {}", file.version)));
        }
        if file.n != file.items.len() {
            return Err(Error::InvalidCorpus(format!(
                "header says {} items, file has {}",
                file.n,
                file.items.len()
            )));
        }
        if let Some((pos, rec)) = file.items.iter().enumerate().find(|(pos, rec)| rec.id != *pos) {
            return Err(Error::InvalidCorpus(format!("item at position {pos} has id {}", rec.id)));
        }
        let corpus = Corpus {
            seed: file.seed,
            items: file
                .items
                .into_iter()
                .map(|r| ItemDescriptor {
                    coarse: r.coarse,
                    fine: r.fine,
                })
                .collect(),
            split: file.split,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    version: u32,
    seed: u64,
    n: usize,
    split: Split,
    items: Vec<ItemRecord>,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    id: ItemId,
    coarse: [f32; NUM_ATTRIBUTES],
    fine: FineFeatures,
}
