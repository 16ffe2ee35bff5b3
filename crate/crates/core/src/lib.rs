//! Core of the novapipe text-classification pipeline.
//!
//! The stages follow the order a user walks through them:
//! [`intake`] parses and profiles a CSV, [`config`] exposes the few
//! parameters worth choosing and runs pre-flight checks, [`features`] and
//! [`train`] turn the table into a fitted model (flat or [`cascade`]),
//! [`eval`] scores and diagnoses it, [`contract`] persists the model with
//! the metadata needed to serve it, and [`guidance`] renders templated
//! explanations for every stage.

pub mod cascade;
pub mod config;
pub mod contract;
pub mod eval;
pub mod features;
#[doc(hidden)]
pub mod fuzzing;
pub mod guidance;
pub mod intake;
pub mod synth;
pub mod train;

pub use config::{PreflightCode, PreflightIssue, Severity, Strategy, TrainingConfig};
pub use contract::{ModelMetadata, Prediction};
pub use eval::{Diagnosis, EvaluationReport};
pub use guidance::{GuidanceContext, GuidanceMessage};
pub use intake::{DataReport, Dataset, LabelBalance};
pub use train::{one_click_train, TrainedModel, TrainingProgress};

/// Hex-encoded SHA-256 of `bytes`.
pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
