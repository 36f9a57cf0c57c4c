//! Fairness elicitation and auditing for binary risk predictions over tabular cases.
//!
//! The crate is organised around the lifecycle of an audit:
//!
//! * [`data`] loads, validates and synthesises datasets of cases;
//! * [`metrics`] computes per-subgroup statistics and group-fairness verdicts;
//! * [`similarity`] ranks cases by user-weighted distance;
//! * [`elicitation`] drives staged stakeholder sessions and records judgments;
//! * [`analysis`] aggregates recorded judgments across sessions;
//! * [`training`] retrains a linear scorer under the elicited constraints.

pub mod analysis;
pub mod data;
pub mod elicitation;
pub mod encoding;
pub mod fixtures;
#[doc(hidden)]
pub mod fuzz_checks;
pub mod metrics;
pub mod similarity;
pub mod training;
pub mod wire;

pub use data::{
    binarize, generate_synthetic, load_dataset, Case, CaseId, DataError, Dataset, FeatureDef,
    FeatureKind, FeatureSchema, Marginals, Provenance, RiskLabel, SyntheticConfig,
};
