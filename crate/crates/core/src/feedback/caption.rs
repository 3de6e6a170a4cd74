//! Relative-caption and relative-attribute phrase selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grammar::Grammar;
use super::vocab::split_words;
use crate::corpus::{FineField, ItemDescriptor, NUM_ATTRIBUTES};
use crate::seed::combine;

/// One dimension along which two items can differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    Attribute(usize),
    Fine(FineField),
}

impl Feature {
    pub fn all() -> impl Iterator<Item = Feature> {
        (0..NUM_ATTRIBUTES)
            .map(Feature::Attribute)
            .chain(FineField::ALL.into_iter().map(Feature::Fine))
    }

    fn ordinal(self) -> u64 {
        match self {
            Feature::Attribute(a) => a as u64,
            Feature::Fine(f) => (NUM_ATTRIBUTES + f as usize) as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phrase {
    /// `None` for the identical-pair sentinel.
    pub feature: Option<Feature>,
    pub text: String,
    pub positional: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Caption {
    pub phrases: Vec<Phrase>,
    /// Describes the target directly rather than relative to the candidate.
    pub absolute: bool,
}

impl Caption {
    fn same(grammar: &Grammar) -> Self {
        Self {
            phrases: vec![Phrase {
                feature: None,
                text: grammar.same.clone(),
                positional: false,
            }],
            absolute: false,
        }
    }

    pub fn surface(&self, grammar: &Grammar) -> String {
        let sep = format!(" {} ", grammar.conjunction);
        self.phrases
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join(&sep)
    }

    pub fn is_same(&self) -> bool {
        self.phrases.len() == 1 && self.phrases[0].feature.is_none()
    }

    pub fn has_positional(&self) -> bool {
        self.phrases.iter().any(|p| p.positional)
    }

    /// Keeps the leading phrases whose joined surface fits in `max_words`.
    fn fit(mut self, grammar: &Grammar, max_words: usize) -> Self {
        let conj = split_words(&grammar.conjunction).len();
        let mut used = 0;
        let mut keep = 0;
        for (i, p) in self.phrases.iter().enumerate() {
            let cost = split_words(&p.text).len() + if i > 0 { conj } else { 0 };
            if i > 0 && used + cost > max_words {
                break;
            }
            used += cost;
            keep = i + 1;
        }
        self.phrases.truncate(keep);
        self
    }
}

fn unit(x: u64) -> f64 {
    // (0, 1]
    ((x >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

fn fingerprint(item: &ItemDescriptor) -> u64 {
    let mut h = 0x5151_u64;
    for v in item.coarse {
        h = combine(h, v.to_bits() as u64);
    }
    for field in FineField::ALL {
        h = combine(h, item.fine.index_of(field) as u64);
    }
    h
}

/// Per-feature discrepancy: |Δ| for coarse attributes, 0/1 for categorical fields.
pub fn discrepancies(target: &ItemDescriptor, candidate: &ItemDescriptor) -> Vec<(Feature, f64)> {
    Feature::all()
        .map(|f| {
            let score = match f {
                Feature::Attribute(a) => (target.coarse[a] as f64 - candidate.coarse[a] as f64).abs(),
                Feature::Fine(field) => {
                    if target.fine.index_of(field) == candidate.fine.index_of(field) {
                        0.0
                    } else {
                        1.0
                    }
                }
            };
            (f, score)
        })
        .collect()
}

/// Features ordered by discrepancy, largest first. Equal scores are ordered
/// by a salience-weighted draw that is a pure function of the pair and seed.
pub fn salience_order(
    target: &ItemDescriptor,
    candidate: &ItemDescriptor,
    grammar: &Grammar,
    seed: u64,
) -> Vec<(Feature, f64)> {
    let pair = combine(combine(seed, fingerprint(target)), fingerprint(candidate));
    let mut scored: Vec<(Feature, f64, f64)> = discrepancies(target, candidate)
        .into_iter()
        .map(|(f, s)| {
            let field = match f {
                Feature::Fine(field) => Some(field),
                Feature::Attribute(_) => None,
            };
            let key = unit(combine(pair, f.ordinal())).ln() / grammar.field_salience(field);
            (f, s, key)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)));
    scored.into_iter().map(|(f, s, _)| (f, s)).collect()
}

pub(crate) fn pair_hash(target: &ItemDescriptor, candidate: &ItemDescriptor, seed: u64) -> u64 {
    combine(combine(seed ^ 0xc0ffee, fingerprint(target)), fingerprint(candidate))
}

/// Phrase count for a pair: one phrase with probability 0.35, otherwise
/// uniform over 2..=max_phrases.
fn phrase_count(pair: u64, max_phrases: usize) -> usize {
    let u = unit(combine(pair, 0xfeed));
    if max_phrases <= 1 || u <= 0.35 {
        1
    } else {
        let extra = ((u - 0.35) / 0.65 * (max_phrases - 1) as f64).ceil() as usize;
        1 + extra.clamp(1, max_phrases - 1)
    }
}

/// Natural-language feedback describing how `target` differs from `candidate`.
pub fn compose_caption(
    target: &ItemDescriptor,
    candidate: &ItemDescriptor,
    grammar: &Grammar,
    max_phrases: usize,
    dissimilarity_threshold: f64,
    seed: u64,
    max_words: usize,
) -> Caption {
    let order = salience_order(target, candidate, grammar, seed);
    let nonzero = order.iter().filter(|(_, s)| *s > 0.0).count();
    if nonzero == 0 {
        return Caption::same(grammar);
    }
    let mean = order.iter().map(|(_, s)| s).sum::<f64>() / order.len() as f64;
    let absolute = mean > dissimilarity_threshold;
    let count = phrase_count(pair_hash(target, candidate, seed), max_phrases).min(nonzero);

    let phrases = order
        .iter()
        .take(count)
        .map(|&(feature, _)| {
            let (text, positional) = match feature {
                Feature::Attribute(a) => {
                    let t = target.coarse[a];
                    let text = if absolute {
                        grammar.absolute_attribute(a, t > 0.5)
                    } else {
                        grammar.relative_attribute(a, t > candidate.coarse[a])
                    };
                    (text, false)
                }
                Feature::Fine(field) => grammar.fine_phrase(field, &target.fine),
            };
            Phrase {
                feature: Some(feature),
                text,
                positional,
            }
        })
        .collect();
    Caption { phrases, absolute }.fit(grammar, max_words)
}

/// "more/less <attr>" feedback over `count` attributes sampled without
/// replacement among those whose (noised) values differ.
pub fn compose_attribute_feedback(
    target_view: &[f32; NUM_ATTRIBUTES],
    candidate_view: &[f32; NUM_ATTRIBUTES],
    grammar: &Grammar,
    count: usize,
    pair_seed: u64,
    max_words: usize,
) -> Caption {
    let mut differing: Vec<usize> = (0..NUM_ATTRIBUTES)
        .filter(|&a| target_view[a] != candidate_view[a])
        .collect();
    if differing.is_empty() {
        return Caption::same(grammar);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    differing.shuffle(&mut rng);
    differing.truncate(count);
    let phrases = differing
        .into_iter()
        .map(|a| Phrase {
            feature: Some(Feature::Attribute(a)),
            text: grammar.relative_attribute(a, target_view[a] > candidate_view[a]),
            positional: false,
        })
        .collect();
    Caption {
        phrases,
        absolute: false,
    }
    .fit(grammar, max_words)
}
