//! Training configuration with safe defaults, and pre-flight checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intake::{ColumnKind, DataReport, Dataset, IntakeError};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SPLIT: SplitRatios = SplitRatios {
    train: 0.70,
    val: 0.15,
    test: 0.15,
};
pub const DEFAULT_BACKEND: &str = "reference-linear";
/// Classes with fewer training rows than this raise a pre-flight warning.
pub const MIN_ROWS_PER_CLASS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Flat,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        DEFAULT_SPLIT
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Optimizer settings for the reference backend. Users are not expected to
/// touch these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    /// Keep the weights of the epoch with the best validation macro-F1.
    pub early_stopping: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 10.0,
            epochs: 10,
            batch_size: 64,
            l2_lambda: 1e-4,
            early_stopping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Empty when the dataset is given separately, as in a training request.
    #[serde(default)]
    pub dataset_id: String,
    pub input_columns: Vec<String>,
    pub target_column: String,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub split_ratios: SplitRatios,
    #[serde(default = "default_backend")]
    pub backend_id: String,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_backend() -> String {
    DEFAULT_BACKEND.to_string()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config must name at least one input column")]
    NoInputs,
    #[error("target column {0:?} is also an input")]
    TargetInInputs(String),
    #[error("split ratios must each be positive and sum to 1, got {0:?}")]
    InvalidSplit([f64; 3]),
    #[error("invalid hyperparameter {0}")]
    InvalidHyperparameter(&'static str),
    #[error("malformed config document: {0}")]
    Malformed(String),
}

impl TrainingConfig {
    /// Structural checks independent of any dataset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.input_columns.is_empty() {
            return Err(ConfigError::NoInputs);
        }
        if self.input_columns.contains(&self.target_column) {
            return Err(ConfigError::TargetInInputs(self.target_column.clone()));
        }
        let r = self.split_ratios.as_array();
        // written so that NaN ratios are rejected too
        if r.iter()
            .any(|v| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
            || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(ConfigError::InvalidSplit(r));
        }
        let hp = &self.hyperparameters;
        if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
            return Err(ConfigError::InvalidHyperparameter("learning_rate"));
        }
        if hp.epochs == 0 {
            return Err(ConfigError::InvalidHyperparameter("epochs"));
        }
        if hp.batch_size == 0 {
            return Err(ConfigError::InvalidHyperparameter("batch_size"));
        }
        if !(hp.l2_lambda > 0.0 && hp.l2_lambda.is_finite()) {
            return Err(ConfigError::InvalidHyperparameter("l2_lambda"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Safe defaults for `target`: every text column other than the target is
/// an input, falling back to all other columns when none is text.
pub fn default_config(report: &DataReport, target: &str) -> Result<TrainingConfig, IntakeError> {
    if report.profile(target).is_none() {
        return Err(IntakeError::UnknownColumn(target.to_string()));
    }
    let others = report.profiles.iter().filter(|p| p.name != target);
    let mut input_columns: Vec<String> = others
        .clone()
        .filter(|p| p.inferred_kind == ColumnKind::Text)
        .map(|p| p.name.clone())
        .collect();
    if input_columns.is_empty() {
        input_columns = others.map(|p| p.name.clone()).collect();
    }
    Ok(TrainingConfig {
        dataset_id: report.dataset_id.0.clone(),
        input_columns,
        target_column: target.to_string(),
        strategy: Strategy::Flat,
        seed: DEFAULT_SEED,
        split_ratios: DEFAULT_SPLIT,
        backend_id: DEFAULT_BACKEND.to_string(),
        hyperparameters: Hyperparameters::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PreflightCode {
    TargetMissing,
    InputMissing,
    TargetInInputs,
    SingleClass,
    TooFewSamplesPerClass,
    AllMissingInput,
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreflightIssue {
    pub code: PreflightCode,
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

impl PreflightIssue {
    fn error(code: PreflightCode, subject: &str, message: String) -> Self {
        PreflightIssue {
            code,
            severity: Severity::Error,
            subject: subject.to_string(),
            message,
        }
    }

    pub fn is_blocking(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// True when none of `issues` blocks training.
pub fn may_train(issues: &[PreflightIssue]) -> bool {
    !issues.iter().any(PreflightIssue::is_blocking)
}

/// Validates `cfg` against `d`. An empty result means training may proceed;
/// errors are listed before warnings.
pub fn preflight_check(d: &Dataset, cfg: &TrainingConfig) -> Vec<PreflightIssue> {
    use PreflightCode::*;
    let mut issues = Vec::new();

    let target_idx = d.column_index(&cfg.target_column);
    if target_idx.is_none() {
        issues.push(PreflightIssue::error(
            TargetMissing,
            &cfg.target_column,
            format!("The target column \"{}\" is not in the dataset.", cfg.target_column),
        ));
    }
    for input in &cfg.input_columns {
        if d.column_index(input).is_none() {
            issues.push(PreflightIssue::error(
                InputMissing,
                input,
                format!("The input column \"{input}\" is not in the dataset."),
            ));
        }
    }
    if cfg.input_columns.contains(&cfg.target_column) {
        issues.push(PreflightIssue::error(
            TargetInInputs,
            &cfg.target_column,
            format!(
                "\"{}\" is both the target and an input; the model would see the answer.",
                cfg.target_column
            ),
        ));
    }
    if d.row_count() > 0 {
        for input in &cfg.input_columns {
            if let Some(idx) = d.column_index(input) {
                if d.rows().iter().all(|r| r[idx].is_none()) {
                    issues.push(PreflightIssue::error(
                        AllMissingInput,
                        input,
                        format!("Every value in the input column \"{input}\" is missing."),
                    ));
                }
            }
        }
    }

    let mut warnings = Vec::new();
    if let Some(t) = target_idx {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for label in d.rows().iter().filter_map(|r| r[t].as_deref()) {
            *counts.entry(label).or_default() += 1;
        }
        if counts.is_empty() {
            issues.push(PreflightIssue::error(
                EmptyDataset,
                &cfg.target_column,
                "No rows have a value in the target column.".to_string(),
            ));
        } else if counts.len() < 2 {
            issues.push(PreflightIssue::error(
                SingleClass,
                &cfg.target_column,
                format!(
                    "The target column \"{}\" has only one class; at least two are needed.",
                    cfg.target_column
                ),
            ));
        } else {
            for (label, count) in &counts {
                if *count < MIN_ROWS_PER_CLASS {
                    warnings.push(PreflightIssue {
                        code: TooFewSamplesPerClass,
                        severity: Severity::Warning,
                        subject: label.to_string(),
                        message: format!("Class \"{label}\" has only {count} rows; results for it will be unreliable."),
                    });
                }
            }
        }
    }
    issues.extend(warnings);
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intake::{parse_csv, profile_dataset};

    fn rows(spec: &[(&str, usize)]) -> Dataset {
        let mut csv = String::from("text,label\n");
        for (label, n) in spec {
            for i in 0..*n {
                csv.push_str(&format!("doc {i} {label},{label}\n"));
            }
        }
        parse_csv(csv.as_bytes()).unwrap()
    }

    fn cfg(inputs: &[&str], target: &str) -> TrainingConfig {
        TrainingConfig {
            dataset_id: String::new(),
            input_columns: inputs.iter().map(|s| s.to_string()).collect(),
            target_column: target.to_string(),
            strategy: Strategy::Flat,
            seed: DEFAULT_SEED,
            split_ratios: DEFAULT_SPLIT,
            backend_id: DEFAULT_BACKEND.into(),
            hyperparameters: Hyperparameters::default(),
        }
    }

    #[test]
    fn defaults_pick_text_columns() {
        let mut csv = String::from("title,body,label\n");
        for i in 0..60 {
            csv.push_str(&format!("title {i},body {i},{}\n", i % 2));
        }
        let report = profile_dataset(&parse_csv(csv.as_bytes()).unwrap());
        let c = default_config(&report, "label").unwrap();
        assert_eq!(c.input_columns, ["title", "body"]);
        assert_eq!(c.seed, 42);
        assert_eq!(
            c.split_ratios,
            SplitRatios {
                train: 0.70,
                val: 0.15,
                test: 0.15
            }
        );
        assert_eq!(c.backend_id, "reference-linear");
        assert!(c.validate().is_ok());
        assert!(matches!(
            default_config(&report, "nope"),
            Err(IntakeError::UnknownColumn(_))
        ));
    }

    #[test]
    fn defaults_fall_back_to_all_columns() {
        let report = profile_dataset(&parse_csv(b"a,b,c\n1,x,p\n2,y,q\n").unwrap());
        let c = default_config(&report, "c").unwrap();
        assert_eq!(c.input_columns, ["a", "b"]);
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let c = cfg(&["text"], "label");
        assert_eq!(TrainingConfig::from_json(&c.to_json()).unwrap(), c);
        let bad = c.to_json().replacen('{', "{\"colour\": 1,", 1);
        assert!(matches!(
            TrainingConfig::from_json(&bad),
            Err(ConfigError::Malformed(_))
        ));
        let minimal = r#"{"dataset_id":"x","input_columns":["t"],"target_column":"y"}"#;
        let parsed = TrainingConfig::from_json(minimal).unwrap();
        assert_eq!(parsed.hyperparameters, Hyperparameters::default());
        assert_eq!(parsed.seed, 42);
    }

    #[test]
    fn validate_rejects_bad_ratios() {
        let mut c = cfg(&["text"], "label");
        c.split_ratios = SplitRatios {
            train: 0.8,
            val: 0.2,
            test: 0.0,
        };
        assert!(matches!(c.validate(), Err(ConfigError::InvalidSplit(_))));
        c.split_ratios = SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(matches!(c.validate(), Err(ConfigError::InvalidSplit(_))));
    }

    #[test]
    fn clean_dataset_has_no_issues() {
        assert!(preflight_check(&rows(&[("a", 20), ("b", 20)]), &cfg(&["text"], "label")).is_empty());
    }

    #[test]
    fn missing_target() {
        let issues = preflight_check(&rows(&[("a", 20), ("b", 20)]), &cfg(&["text"], "y"));
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].code, PreflightCode::TargetMissing);
        assert_eq!(issues[0].severity, Severity::Error);
    }

    #[test]
    fn too_few_rows_is_a_warning() {
        let issues = preflight_check(&rows(&[("a", 4), ("b", 50)]), &cfg(&["text"], "label"));
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].code, PreflightCode::TooFewSamplesPerClass);
        assert_eq!(issues[0].subject, "a");
        assert!(may_train(&issues));
    }

    #[test]
    fn errors_precede_warnings() {
        let issues = preflight_check(&rows(&[("a", 4), ("b", 50)]), &cfg(&["text", "gone"], "label"));
        let codes: Vec<_> = issues.iter().map(|i| i.code).collect();
        assert_eq!(
            codes,
            [PreflightCode::InputMissing, PreflightCode::TooFewSamplesPerClass]
        );
        assert!(!may_train(&issues));
    }
}
