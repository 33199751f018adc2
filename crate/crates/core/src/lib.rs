//! Item-level reliable change analysis for comparing two versions of a
//! stochastic model on a fixed benchmark.
//!
//! Every item is administered `K` times to each model version. The per-item
//! proportion correct is treated as a measurement whose noise band is derived
//! from split-half reliability, and each item is classified as reliably
//! improved, reliably deteriorated, or unchanged using the Reliable Change
//! Index (RCI). Supporting analyses cover the permutation null, difficulty and
//! domain decomposition, cross-pair comparisons and agreement with single-shot
//! greedy scoring.

pub mod cohort;
pub mod config;
pub mod error;
pub mod model;
pub mod null;
pub mod oracle;
pub mod pipeline;
pub mod rci;
pub mod reliability;
pub mod report;
pub mod seeding;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    aggregate_accuracy, compute_item_accuracy, parse_greedy, parse_trials, AccuracyRow,
    AccuracyTable, GreedyRun, ItemBlock, Slot, TrialFormat, TrialRecord, TrialSet,
    ValidationReport,
};
pub use pipeline::{analyze, AnalysisConfig, Bundle, PairInput, PipelineInput, Section};
pub use rci::{Category, ChurnReport, FloorCeilingRule, PairMeasurement, RciClassification};
pub use reliability::{ProphecyResult, ReliabilityEstimate};
