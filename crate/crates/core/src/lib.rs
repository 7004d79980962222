//! Pool-based active learning with a classifier committee.
//!
//! The crate is organised around the annotation loop: a [`data::Dataset`] is
//! split into a [`data::PoolState`], an [`engine::AlSession`] labels a random
//! seed fraction, fine-tunes one [`model::Classifier`] per committee learning
//! rate, ranks the unlabeled pool by [`uncertainty`] score and asks an oracle
//! for the most informative labels before retraining.

pub mod data;
pub mod engine;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod uncertainty;
pub mod util;

pub use data::{Dataset, FeatureStats, PoolState, SampleId, SplitSpec};
pub use engine::{
    AlSession, BudgetLedger, OracleKind, Phase, SelectionScope, SessionConfig, SimulatedOracle,
    Strategy,
};
pub use matrix::Matrix;
pub use metrics::{RocCurve, RoundRecord};
pub use model::{Architecture, Classifier, ModelConfig, TrainConfig, TrainMode};
pub use uncertainty::{ScoreBreakdown, UncertaintyReport};
