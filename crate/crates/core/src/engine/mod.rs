//! The annotation loop: seeding, committee training, pool scoring, querying and retraining.

mod budget;
mod persist;
mod session;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, SampleId};
use crate::model::{Architecture, ModelError, TrainConfig};
use crate::uncertainty::UncertaintyError;

pub use budget::BudgetLedger;
pub use persist::{read_history_csv, write_history_csv};
pub use session::{AlSession, QueryRecord, SessionStatus};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("operation needs phase {expected:?}, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("training cohort is empty")]
    EmptyCohort,
    #[error("no labeled samples to train on")]
    EmptyLabeledSet,
    #[error("sample {0} has no ground-truth label for the simulated oracle")]
    MissingGroundTruth(SampleId),
    #[error("sample {0} is not awaiting a label")]
    UnexpectedSample(SampleId),
    #[error("label {label} for sample {id} outside 0..{class_count}")]
    InvalidLabel {
        id: SampleId,
        label: usize,
        class_count: usize,
    },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("report does not cover candidate sample {0}")]
    IncompleteReport(SampleId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("persistence: {0}")]
    Persist(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::WrongPhase { .. } => "WRONG_PHASE",
            EngineError::EmptyCohort => "EMPTY_COHORT",
            EngineError::EmptyLabeledSet => "EMPTY_LABELED_SET",
            EngineError::MissingGroundTruth(_) => "MISSING_GROUND_TRUTH",
            EngineError::UnexpectedSample(_) => "UNEXPECTED_SAMPLE",
            EngineError::InvalidLabel { .. } => "INVALID_LABEL",
            EngineError::InvalidConfig(_) => "INVALID_CONFIG",
            EngineError::IncompleteReport(_) => "INCOMPLETE_REPORT",
            EngineError::Model(e) => e.code(),
            EngineError::Uncertainty(e) => e.code(),
            EngineError::Data(e) => e.code(),
            EngineError::Persist(_) => "PERSISTENCE_ERROR",
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Seeding,
    Training,
    Scoring,
    AwaitingLabels,
    Done,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    #[default]
    Uncertainty,
    Random,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Uncertainty => "UNCERTAINTY",
            Strategy::Random => "RANDOM",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "UNCERTAINTY" => Ok(Strategy::Uncertainty),
            "RANDOM" => Ok(Strategy::Random),
            other => Err(format!(
                "unknown strategy `{other}` (expected UNCERTAINTY or RANDOM)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OracleKind {
    #[default]
    Simulated,
    Human,
}

/// Which samples are ranked when picking queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionScope {
    /// Only samples still awaiting a label.
    #[default]
    UnlabeledPool,
    /// The whole training cohort; picks that are already labeled cost nothing.
    FullCohort,
}

/// What `select_fraction` is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionBase {
    /// The full training cohort `N`.
    #[default]
    Cohort,
    /// The candidates being ranked.
    Candidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub initial_fraction: f64,
    pub select_fraction: f64,
    pub committee_lrs: Vec<f64>,
    pub strategy: Strategy,
    pub rounds: usize,
    pub architecture: Architecture,
    /// Template for committee and final-model training; learning rate and seed are
    /// overridden per member and round.
    pub train: TrainConfig,
    pub seed: u64,
    pub oracle: OracleKind,
    pub selection_scope: SelectionScope,
    pub selection_base: SelectionBase,
    /// Stop early once validation AUC reaches this value.
    pub auc_target: Option<f64>,
    /// Retrain after this many answers even if the batch is not fully labeled.
    pub retrain_after: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            initial_fraction: 0.30,
            select_fraction: 0.30,
            committee_lrs: vec![0.001, 0.0005, 0.0001],
            strategy: Strategy::Uncertainty,
            rounds: 1,
            architecture: Architecture::Linear,
            train: TrainConfig::default(),
            seed: 0,
            oracle: OracleKind::Simulated,
            selection_scope: SelectionScope::UnlabeledPool,
            selection_base: SelectionBase::Cohort,
            auc_target: None,
            retrain_after: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        for (name, f) in [
            ("initial_fraction", self.initial_fraction),
            ("select_fraction", self.select_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        if self.committee_lrs.len() < 2 {
            return bad(format!(
                "committee needs at least 2 learning rates, got {}",
                self.committee_lrs.len()
            ));
        }
        if let Some(lr) = self
            .committee_lrs
            .iter()
            .find(|lr| !(**lr > 0.0 && lr.is_finite()))
        {
            return bad(format!("learning rate {lr} must be positive"));
        }
        for (i, a) in self.committee_lrs.iter().enumerate() {
            if self.committee_lrs[i + 1..].contains(a) {
                return bad(format!("learning rate {a} listed twice"));
            }
        }
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.train.batch_size == 0 {
            return bad("train.batch_size must be >= 1".into());
        }
        if let Architecture::Mlp { hidden_units: 0 } = self.architecture {
            return bad("hidden_units must be >= 1".into());
        }
        if self.retrain_after == Some(0) {
            return bad("retrain_after must be >= 1".into());
        }
        Ok(())
    }

    /// Learning rate for the final model: the median of the committee rates
    /// (upper median for an even count, counting from the largest rate).
    pub fn final_learning_rate(&self) -> f64 {
        let mut lrs = self.committee_lrs.clone();
        lrs.sort_by(|a, b| b.total_cmp(a));
        lrs[lrs.len() / 2]
    }
}

/// A label source for queried samples.
pub trait Oracle {
    fn label(&self, id: SampleId) -> Option<usize>;
}

/// Answers from the dataset's ground truth.
pub struct SimulatedOracle<'a> {
    dataset: &'a Dataset,
}

impl<'a> SimulatedOracle<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self { dataset }
    }
}

impl Oracle for SimulatedOracle<'_> {
    fn label(&self, id: SampleId) -> Option<usize> {
        self.dataset.label_of(id)
    }
}

/// Seed-derivation tags, so each consumer of randomness gets its own stream.
/// Tags from 10 up are free for callers.
pub mod stream {
    pub const MODEL_INIT: u64 = 1;
    pub const SEEDING: u64 = 2;
    pub const COMMITTEE: u64 = 3;
    pub const FINAL: u64 = 4;
    pub const RANDOM_QUERY: u64 = 5;
}
