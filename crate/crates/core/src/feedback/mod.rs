//! User simulator: relative captions (natural-language channel) and
//! rule-based relative-attribute feedback (baseline channel).
//!
//! Feedback is a pure function of the (target, candidate) pair and the
//! configuration; it never looks at earlier turns.

mod caption;
mod grammar;
mod vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use caption::{
    compose_attribute_feedback, compose_caption, discrepancies, salience_order, Caption, Feature, Phrase,
};
pub use grammar::Grammar;
pub use vocab::{split_words, Vocab, DEFAULT_MAX_LEN, EOS, PAD, UNK};

use crate::corpus::{Corpus, ItemDescriptor, ItemId, NUM_ATTRIBUTES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    NaturalLanguage,
    Attribute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    pub channel: Channel,
    /// Upper bound on relative phrases per caption.
    pub max_phrases: usize,
    /// Attributes mentioned per turn on the attribute channel (`Attr_n`).
    pub attribute_count: usize,
    /// Standard deviation of the frozen per-item attribute noise.
    pub attribute_noise: f64,
    /// Mean discrepancy above which the caption describes the target directly.
    pub dissimilarity_threshold: f64,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            channel: Channel::NaturalLanguage,
            max_phrases: 3,
            attribute_count: 3,
            attribute_noise: 0.0,
            dissimilarity_threshold: 0.6,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// Attribute noise of the hand-crafted-feature baseline.
pub const ATTRIBUTE_NOISE: f64 = 0.15;
/// Attribute noise of the learned ("deep") attribute-predictor baseline.
pub const ATTRIBUTE_NOISE_DEEP: f64 = 0.05;

impl FeedbackConfig {
    pub fn natural_language() -> Self {
        Self::default()
    }

    pub fn attribute(count: usize) -> Self {
        Self {
            channel: Channel::Attribute,
            attribute_count: count,
            attribute_noise: ATTRIBUTE_NOISE,
            ..Self::default()
        }
    }

    pub fn attribute_deep(count: usize) -> Self {
        Self {
            attribute_noise: ATTRIBUTE_NOISE_DEEP,
            ..Self::attribute(count)
        }
    }

    /// Named presets: `nl`, `attr1`, `attr3`, `attr10`, `attr10-deep`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "nl" => Ok(Self::natural_language()),
            "attr1" => Ok(Self::attribute(1)),
            "attr3" => Ok(Self::attribute(3)),
            "attr10" => Ok(Self::attribute(10)),
            "attr10-deep" => Ok(Self::attribute_deep(10)),
            other => Err(Error::Config(format!("unknown feedback preset `{other}`"))),
        }
    }

    /// Preset-style name: `nl`, `attr{n}`, or `attr{n}-deep` for the low-noise variant.
    pub fn label(&self) -> String {
        match self.channel {
            Channel::NaturalLanguage => "nl".into(),
            Channel::Attribute if self.attribute_noise == ATTRIBUTE_NOISE_DEEP => format!("attr{}-deep", self.attribute_count),
            Channel::Attribute => format!("attr{}", self.attribute_count),
        }
    }

    pub const PRESETS: [&'static str; 5] = ["nl", "attr1", "attr3", "attr10", "attr10-deep"];

    pub fn validate(&self) -> Result<()> {
        if self.max_phrases < 1 {
            return Err(Error::Config("max_phrases must be at least 1".into()));
        }
        if !(1..=NUM_ATTRIBUTES).contains(&self.attribute_count) {
            return Err(Error::Config(format!(
                "attribute_count {} not in 1..={NUM_ATTRIBUTES}",
                self.attribute_count
            )));
        }
        if !(self.attribute_noise >= 0.0 && self.attribute_noise.is_finite()) {
            return Err(Error::Config("attribute_noise must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dissimilarity_threshold) {
            return Err(Error::Config("dissimilarity_threshold must lie in [0, 1]".into()));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must leave room for a word and <eos>".into()));
        }
        Ok(())
    }
}

/// A feedback sentence: token ids (ending in `<eos>`) and the text they came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<u32>,
    pub surface: String,
}

impl Utterance {
    pub fn from_text(vocab: &Vocab, text: &str, max_len: usize) -> Self {
        Self {
            tokens: vocab.tokenize(text, max_len),
            surface: text.to_string(),
        }
    }
}

/// Anything that can answer "how does the target differ from this candidate?".
pub trait FeedbackSource {
    fn feedback(&self, target: ItemId, candidate: ItemId) -> Result<Utterance>;
}

/// Deterministic simulated user over a fixed corpus.
#[derive(Clone, Debug)]
pub struct Simulator {
    grammar: Grammar,
    vocab: Vocab,
    config: FeedbackConfig,
    items: Vec<ItemDescriptor>,
    /// Coarse attributes as seen by the attribute channel, noise frozen per item.
    views: Vec<[f32; NUM_ATTRIBUTES]>,
}

impl Simulator {
    pub fn new(corpus: &Corpus, grammar: Grammar, config: FeedbackConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocab::build(&grammar);
        let views = corpus
            .items
            .iter()
            .enumerate()
            .map(|(id, item)| noisy_view(item, id, &config))
            .collect();
        Ok(Self {
            grammar,
            vocab,
            config,
            items: corpus.items.clone(),
            views,
        })
    }

    pub fn config(&self) -> &FeedbackConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn attribute_view(&self, id: ItemId) -> Result<&[f32; NUM_ATTRIBUTES]> {
        self.views.get(id).ok_or(Error::InvalidItem(id))
    }

    /// The caption structure behind [`FeedbackSource::feedback`].
    pub fn caption(&self, target: ItemId, candidate: ItemId) -> Result<Caption> {
        let t = self.items.get(target).ok_or(Error::InvalidItem(target))?;
        let c = self.items.get(candidate).ok_or(Error::InvalidItem(candidate))?;
        let max_words = self.config.max_len - 1;
        Ok(match self.config.channel {
            Channel::NaturalLanguage => relative_caption(t, c, &self.grammar, &self.config, max_words),
            Channel::Attribute => compose_attribute_feedback(
                &self.views[target],
                &self.views[candidate],
                &self.grammar,
                self.config.attribute_count,
                crate::seed::combine(crate::seed::combine(self.config.seed, target as u64), candidate as u64),
                max_words,
            ),
        })
    }

    fn utterance(&self, caption: &Caption) -> Utterance {
        Utterance::from_text(&self.vocab, &caption.surface(&self.grammar), self.config.max_len)
    }
}

impl FeedbackSource for Simulator {
    fn feedback(&self, target: ItemId, candidate: ItemId) -> Result<Utterance> {
        Ok(self.utterance(&self.caption(target, candidate)?))
    }
}

/// Natural-language caption with the configured phrase budget.
pub fn relative_caption(
    target: &ItemDescriptor,
    candidate: &ItemDescriptor,
    grammar: &Grammar,
    config: &FeedbackConfig,
    max_words: usize,
) -> Caption {
    compose_caption(
        target,
        candidate,
        grammar,
        config.max_phrases,
        config.dissimilarity_threshold,
        config.seed,
        max_words,
    )
}

fn noisy_view(item: &ItemDescriptor, id: ItemId, config: &FeedbackConfig) -> [f32; NUM_ATTRIBUTES] {
    if config.attribute_noise == 0.0 {
        return item.coarse;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::combine(config.seed ^ 0xa77b, id as u64));
    let mut view = item.coarse;
    for v in view.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += (z * config.attribute_noise) as f32;
    }
    view
}
