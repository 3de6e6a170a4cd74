//! Live retrieval sessions, independent of the HTTP layer.
//!
//! A session follows the evaluation protocol: a seeded uniform first
//! candidate, greedy selection with shown items excluded, at most T turns.

use std::fmt;

use dmgr_core::corpus::{Corpus, FeatureBank, ItemDescriptor, ItemId};
use dmgr_core::feedback::{FeedbackSource, Simulator, Utterance};
use dmgr_core::manager::{first_candidate, DialogManager, DialogState, EpisodeOptions};
use dmgr_core::seed::combine;
use dmgr_core::training::ranking_percentile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// A human searches for an assigned test-split target.
    Study,
    /// A human searches for whatever they have in mind; no target, no rewards.
    Free,
    /// The simulator answers for a target.
    Simulated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Found,
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    NotFound,
    Conflict,
    Validation,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineError {
    pub kind: ErrorKind,
    pub message: String,
}

impl EngineError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self.kind {
            ErrorKind::NotFound => "not_found",
            ErrorKind::Conflict => "conflict",
            ErrorKind::Validation => "validation",
            ErrorKind::Internal => "internal",
        }
    }
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code(), self.message)
    }
}

impl From<dmgr_core::Error> for EngineError {
    fn from(e: dmgr_core::Error) -> Self {
        Self::new(ErrorKind::Internal, e.to_string())
    }
}

type Result<T> = std::result::Result<T, EngineError>;

/// One turn: the candidate shown and the feedback it received.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn: usize,
    pub candidate: ItemId,
    pub feedback: String,
    /// Target percentile after this feedback; never set in free mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub mode: Mode,
    pub seed: u64,
    pub target: Option<ItemId>,
    pub status: Status,
    pub finished: bool,
    pub created_at: u64,
    /// Candidate on screen now.
    pub candidate: ItemId,
    pub turns: Vec<Turn>,
    state: DialogState,
}

impl Session {
    pub fn percentiles(&self) -> Vec<f64> {
        self.turns.iter().filter_map(|t| t.percentile).collect()
    }

    /// Candidates in the order shown, including the one on screen.
    pub fn shown(&self) -> Vec<ItemId> {
        self.turns.iter().map(|t| t.candidate).chain([self.candidate]).collect()
    }
}

/// Read-only model, corpus and bank shared by all sessions.
pub struct Engine {
    pub manager: DialogManager,
    pub corpus: Corpus,
    /// Candidate pool and ranking bank (the test split).
    pub bank: FeatureBank,
    pub sim: Simulator,
    pub options: EpisodeOptions,
}

impl Engine {
    pub fn item(&self, id: ItemId) -> Result<&ItemDescriptor> {
        self.corpus
            .item(id)
            .map_err(|_| EngineError::new(ErrorKind::NotFound, format!("no item {id}")))
    }

    pub fn horizon(&self) -> usize {
        self.options.horizon
    }

    /// Study mode draws its target from a stream separate from the first
    /// candidate, so the same seed shows the same first item in every mode.
    pub fn create(&self, id: String, mode: Mode, seed: u64, target: Option<ItemId>, created_at: u64) -> Result<Session> {
        let target = match (mode, target) {
            (Mode::Free, Some(_)) => {
                return Err(EngineError::new(ErrorKind::Validation, "free mode sessions take no target"));
            }
            (Mode::Free, None) => None,
            (_, Some(t)) if !self.bank.contains(t) => {
                return Err(EngineError::new(ErrorKind::NotFound, format!("no test-split item {t}")));
            }
            (_, Some(t)) => Some(t),
            (Mode::Study, None) => {
                let mut rng = ChaCha8Rng::seed_from_u64(combine(seed, 0x7a26));
                Some(self.bank.ids()[rng.random_range(0..self.bank.len())])
            }
            (Mode::Simulated, None) => {
                return Err(EngineError::new(ErrorKind::Validation, "simulated sessions need a target_id"));
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidate = first_candidate(&self.bank, &mut rng);
        Ok(Session {
            id,
            mode,
            seed,
            target,
            status: Status::Active,
            finished: false,
            created_at,
            candidate,
            turns: Vec::new(),
            state: DialogState::new(self.manager.dim()),
        })
    }

    /// Consumes feedback on the current candidate and picks the next one.
    /// Simulated sessions ignore `text` and ask the simulator.
    pub fn feedback(&self, session: &mut Session, text: Option<&str>) -> Result<()> {
        if session.status != Status::Active || session.finished {
            return Err(EngineError::new(ErrorKind::Conflict, format!("session {} is not active", session.id)));
        }
        let utterance = match (session.mode, session.target) {
            (Mode::Simulated, Some(target)) => self.sim.feedback(target, session.candidate)?,
            _ => {
                let text = text.map(str::trim).unwrap_or_default();
                if text.is_empty() {
                    return Err(EngineError::new(ErrorKind::Validation, "feedback text must not be empty"));
                }
                Utterance::from_text(self.sim.vocab(), text, self.manager.config().max_len)
            }
        };
        let candidate = session.candidate;
        let s = session.state.observe(&self.manager, &self.bank, candidate, &utterance)?;
        let percentile = match session.target {
            Some(t) => Some(ranking_percentile(s, &self.bank, t)?),
            None => None,
        };
        let next = session.state.candidates(&self.bank, &self.options)?.argmax();
        session.turns.push(Turn {
            turn: session.state.turn,
            candidate,
            feedback: utterance.surface,
            percentile,
        });
        session.candidate = next;
        if session.state.turn >= self.horizon() {
            session.status = Status::Exhausted;
        }
        Ok(())
    }

    /// Ends the session. After the last turn the status stays `exhausted`.
    pub fn finish(&self, session: &mut Session, found: bool) -> Result<()> {
        if session.finished {
            return Err(EngineError::new(ErrorKind::Conflict, format!("session {} already finished", session.id)));
        }
        session.finished = true;
        if session.status == Status::Active {
            session.status = if found { Status::Found } else { Status::Exhausted };
        }
        Ok(())
    }
}
