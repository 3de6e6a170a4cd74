use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    Category, Color, Enumerated, FineFeatures, FineField, Ornament, Pattern, Position, Toe, NUM_ATTRIBUTES,
};
use crate::error::{Error, Result};

pub const GRAMMAR_VERSION: u32 = 1;

const DEFAULT_GRAMMAR: &str = include_str!("../../assets/grammar.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionTemplates {
    pub more: String,
    pub less: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteTemplates {
    pub high: String,
    pub low: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTemplates {
    pub category: String,
    pub primary_color: String,
    pub accent_color: String,
    pub toe: String,
    pub pattern: String,
    pub ornament: String,
    pub ornament_position: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueWords {
    pub category: BTreeMap<String, String>,
    pub color: BTreeMap<String, String>,
    pub toe: BTreeMap<String, String>,
    pub pattern: BTreeMap<String, String>,
    pub ornament: BTreeMap<String, String>,
    pub position: BTreeMap<String, String>,
}

/// Tie-break weights used when several features share the top discrepancy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Salience {
    pub category: f64,
    pub primary_color: f64,
    pub accent_color: f64,
    pub toe: f64,
    pub pattern: f64,
    pub ornament: f64,
    pub ornament_position: f64,
    pub attribute: f64,
}

/// Lexicon and phrase templates of the feedback simulator.
///
/// Templates use `{attr}`, `{value}`, `{position}` and `{ornament}`
/// placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub version: u32,
    pub same: String,
    pub conjunction: String,
    pub attributes: Vec<String>,
    pub relative: DirectionTemplates,
    pub absolute: AbsoluteTemplates,
    pub fine: FineTemplates,
    pub solid_pattern: String,
    pub no_ornament: String,
    pub values: ValueWords,
    pub salience: Salience,
    #[serde(default)]
    pub lexicon: Vec<String>,
}

impl Default for Grammar {
    fn default() -> Self {
        Self::from_json(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn lookup<E: Enumerated>(table: &BTreeMap<String, String>, value: E) -> &str {
    table.get(value.word()).map(String::as_str).unwrap_or(value.word())
}

impl Grammar {
    pub fn from_json(text: &str) -> Result<Self> {
        let grammar: Grammar = serde_json::from_str(text).map_err(Error::json)?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grammar serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.version != GRAMMAR_VERSION {
            return Err(Error::Config(format!("unsupported grammar version {}", self.version)));
        }
        if self.attributes.len() != NUM_ATTRIBUTES {
            return Err(Error::Config(format!(
                "grammar lists {} attribute words, expected {NUM_ATTRIBUTES}",
                self.attributes.len()
            )));
        }
        if self.same.trim().is_empty() {
            return Err(Error::Config("identical-pair sentinel must not be empty".into()));
        }
        Ok(())
    }

    pub fn attribute_word(&self, attr: usize) -> &str {
        &self.attributes[attr]
    }

    pub fn relative_attribute(&self, attr: usize, more: bool) -> String {
        let t = if more { &self.relative.more } else { &self.relative.less };
        fill(t, &[("attr", self.attribute_word(attr))])
    }

    pub fn absolute_attribute(&self, attr: usize, high: bool) -> String {
        let t = if high { &self.absolute.high } else { &self.absolute.low };
        fill(t, &[("attr", self.attribute_word(attr))])
    }

    /// Phrase naming the `field` value of `target`; second element is true
    /// when the phrase carries a positional modifier.
    pub fn fine_phrase(&self, field: FineField, target: &FineFeatures) -> (String, bool) {
        let v = &self.values;
        let position = lookup(&v.position, target.ornament_position);
        let ornament = lookup(&v.ornament, target.ornament);
        let (template, value) = match field {
            FineField::Category => (&self.fine.category, lookup(&v.category, target.category)),
            FineField::PrimaryColor => (&self.fine.primary_color, lookup(&v.color, target.primary_color)),
            FineField::AccentColor => (&self.fine.accent_color, lookup(&v.color, target.accent_color)),
            FineField::Toe => (&self.fine.toe, lookup(&v.toe, target.toe)),
            FineField::Pattern if target.pattern == Pattern::Solid => return (self.solid_pattern.clone(), false),
            FineField::Pattern => (&self.fine.pattern, lookup(&v.pattern, target.pattern)),
            FineField::Ornament if target.ornament == Ornament::None => return (self.no_ornament.clone(), false),
            FineField::Ornament => (&self.fine.ornament, ornament),
            FineField::OrnamentPosition => (&self.fine.ornament_position, position),
        };
        let positional = field == FineField::OrnamentPosition || template.contains("{position}");
        let text = fill(
            template,
            &[("value", value), ("position", position), ("ornament", ornament)],
        );
        (text, positional)
    }

    pub fn field_salience(&self, field: Option<FineField>) -> f64 {
        let s = &self.salience;
        match field {
            None => s.attribute,
            Some(FineField::Category) => s.category,
            Some(FineField::PrimaryColor) => s.primary_color,
            Some(FineField::AccentColor) => s.accent_color,
            Some(FineField::Toe) => s.toe,
            Some(FineField::Pattern) => s.pattern,
            Some(FineField::Ornament) => s.ornament,
            Some(FineField::OrnamentPosition) => s.ornament_position,
        }
    }

    /// Every surface string the grammar can emit, in a fixed order.
    pub fn surface_strings(&self) -> Vec<String> {
        let mut out = vec![self.same.clone(), self.conjunction.clone()];
        for attr in 0..NUM_ATTRIBUTES {
            for flag in [true, false] {
                out.push(self.relative_attribute(attr, flag));
                out.push(self.absolute_attribute(attr, flag));
            }
        }
        // a representative descriptor per enumerated value reaches every terminal
        let base = FineFeatures {
            category: Category::Sneaker,
            primary_color: Color::Black,
            accent_color: Color::Black,
            toe: Toe::Round,
            pattern: Pattern::Solid,
            ornament: Ornament::Laces,
            ornament_position: Position::Toe,
        };
        let mut variants = vec![base];
        variants.extend(Category::ALL.iter().map(|&category| FineFeatures { category, ..base }));
        variants.extend(Color::ALL.iter().map(|&c| FineFeatures {
            primary_color: c,
            accent_color: c,
            ..base
        }));
        variants.extend(Toe::ALL.iter().map(|&toe| FineFeatures { toe, ..base }));
        variants.extend(Pattern::ALL.iter().map(|&pattern| FineFeatures { pattern, ..base }));
        variants.extend(Ornament::ALL.iter().map(|&ornament| FineFeatures { ornament, ..base }));
        variants.extend(Position::ALL.iter().map(|&ornament_position| FineFeatures {
            ornament_position,
            ..base
        }));
        for v in &variants {
            for field in FineField::ALL {
                out.push(self.fine_phrase(field, v).0);
            }
        }
        out.extend(self.lexicon.iter().cloned());
        out
    }
}
