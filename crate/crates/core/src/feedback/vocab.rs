use std::collections::HashMap;

use super::grammar::Grammar;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
pub const DEFAULT_MAX_LEN: usize = 16;

/// Word ↔ token id map. Ids 0, 1, 2 are `<pad>`, `<unk>`, `<eos>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

/// Splits on whitespace and punctuation; hyphens and apostrophes inside a
/// word are kept.
pub fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .map(|w| w.trim_matches(|c| c == '-' || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

impl Vocab {
    /// Reserved tokens followed by every terminal of the grammar in first-seen order.
    pub fn build(grammar: &Grammar) -> Self {
        let mut vocab = Self {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for w in ["<pad>", "<unk>", "<eos>"] {
            vocab.push(w);
        }
        for surface in grammar.surface_strings() {
            for w in split_words(&surface) {
                vocab.push(&w);
            }
        }
        vocab
    }

    fn push(&mut self, word: &str) {
        if !self.ids.contains_key(word) {
            self.ids.insert(word.to_string(), self.words.len() as u32);
            self.words.push(word.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Lowercases, splits, maps unknown words to `<unk>`, keeps at most
    /// `max_len - 1` words and appends `<eos>`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut tokens: Vec<u32> = split_words(text)
            .iter()
            .take(max_len.saturating_sub(1))
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect();
        tokens.push(EOS);
        tokens
    }

    pub fn decode(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .filter(|&&t| t != PAD && t != EOS)
            .map(|&t| self.word(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
