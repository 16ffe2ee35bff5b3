//! Scoring and diagnosis: confusion matrix, classification report,
//! per-stage cascade reports and data/result findings.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::stage_subset;
use crate::intake::{DataReport, LabelBalance};
use crate::train::{Example, TrainedModel};

pub const IMBALANCE_WARNING_RATIO: f64 = 3.0;
pub const IMBALANCE_SEVERE_RATIO: f64 = 10.0;
pub const FEW_SAMPLES: usize = 20;
pub const DUPLICATE_FRACTION: f64 = 0.10;
pub const STRONG_MACRO_F1: f64 = 0.8;
pub const WEAK_RECALL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("y_true has {0} entries but y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0:?} is not among the report labels")]
    UnknownLabel(String),
    #[error("stage reports need a cascade model")]
    NotACascade,
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    /// Builds the matrix from class indices into `labels`.
    pub fn from_indices(labels: Vec<String>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = ConfusionMatrix::zeros(labels);
        for (t, p) in pairs {
            cm.counts[t][p] += 1;
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix<S: AsRef<str>>(
    y_true: &[S],
    y_pred: &[S],
    labels: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let index = |s: &S| {
        labels
            .iter()
            .position(|l| l == s.as_ref())
            .ok_or_else(|| EvalError::UnknownLabel(s.as_ref().to_string()))
    };
    let pairs = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| Ok((index(t)?, index(p)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ConfusionMatrix::from_indices(labels.to_vec(), pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    /// Keyed by label, in the confusion matrix's label order.
    pub per_class: IndexMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_reports: Option<Vec<EvaluationReport>>,
}

impl EvaluationReport {
    /// Class with the lowest recall; ties go to the earlier label.
    pub fn min_recall(&self) -> Option<(&str, f64)> {
        self.per_class
            .iter()
            .map(|(l, m)| (l.as_str(), m.recall))
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class; every 0/0 is taken as 0.
pub fn classification_report(cm: &ConfusionMatrix) -> EvaluationReport {
    let k = cm.labels.len();
    let total = cm.total();
    let mut per_class = IndexMap::with_capacity(k);
    for (i, label) in cm.labels.iter().enumerate() {
        let tp = cm.counts[i][i];
        let predicted: u64 = (0..k).map(|r| cm.counts[r][i]).sum();
        let support: u64 = cm.counts[i].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(
            label.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let macro_f1 = if k == 0 {
        0.0
    } else {
        per_class.values().map(|m| m.f1).sum::<f64>() / k as f64
    };
    let weighted_f1 = if total == 0 {
        0.0
    } else {
        per_class.values().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64
    };
    EvaluationReport {
        accuracy: ratio(cm.trace(), total),
        per_class,
        macro_f1,
        weighted_f1,
        confusion: cm.clone(),
        stage_reports: None,
    }
}

/// Label names for a binary stage report: index 0 is the rest, 1 the
/// stage's positive class.
pub fn stage_labels(positive: &str) -> Vec<String> {
    vec![format!("not {positive}"), positive.to_string()]
}

/// Scores every cascade stage on its own subset of `test`, in plan order.
pub fn stage_reports(model: &TrainedModel, test: &[Example]) -> Result<Vec<EvaluationReport>, EvalError> {
    let (plan, stages) = match (&model.cascade_plan, &model.stage_models) {
        (Some(plan), Some(stages)) => (plan, stages),
        _ => return Err(EvalError::NotACascade),
    };
    let mut reports = Vec::with_capacity(stages.len());
    for (spec, stage_model) in plan.stages.iter().zip(stages) {
        // an empty test-side subset yields an all-zero report rather than an error
        let subset = stage_subset(test, spec, &model.encoder).unwrap_or_default();
        let pairs = subset
            .iter()
            .map(|ex| (ex.label, stage_model.predict_class(&ex.features)));
        let cm = ConfusionMatrix::from_indices(stage_labels(&spec.positive_class), pairs);
        reports.push(classification_report(&cm));
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosisKind {
    LabelImbalance,
    TooFewSamples,
    MissingValues,
    DuplicateRows,
    LowMinorityRecall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosisSeverity {
    Info,
    Warning,
    Severe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub kind: DiagnosisKind,
    pub severity: DiagnosisSeverity,
    pub subject: String,
    /// Values that triggered the finding, together with the threshold used.
    pub evidence: BTreeMap<String, f64>,
    pub explanation: String,
}

fn evidence<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Detects common data and result problems. Missing values are checked on
/// every profiled column.
pub fn diagnose(report: &DataReport, balance: &LabelBalance, eval: Option<&EvaluationReport>) -> Vec<Diagnosis> {
    let mut out = Vec::new();

    let ratio = balance.imbalance_ratio;
    if balance.counts.len() >= 2 && ratio >= IMBALANCE_WARNING_RATIO {
        let (max_label, max) = balance
            .counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .unwrap();
        let (min_label, min) = balance
            .counts
            .iter()
            .min_by(|a, b| a.1.cmp(b.1).then_with(|| a.0.cmp(b.0)))
            .unwrap();
        let severity = if ratio >= IMBALANCE_SEVERE_RATIO {
            DiagnosisSeverity::Severe
        } else {
            DiagnosisSeverity::Warning
        };
        out.push(Diagnosis {
            kind: DiagnosisKind::LabelImbalance,
            severity,
            subject: min_label.clone(),
            evidence: evidence([
                ("imbalance_ratio", ratio),
                ("max_count", *max as f64),
                ("min_count", *min as f64),
            ]),
            explanation: format!(
                "\"{max_label}\" has {max} rows but \"{min_label}\" only {min} \
                 ({ratio:.1} to 1). A model can score well overall while rarely predicting \"{min_label}\"."
            ),
        });
    }

    for (label, count) in &balance.counts {
        if *count < FEW_SAMPLES {
            out.push(Diagnosis {
                kind: DiagnosisKind::TooFewSamples,
                severity: DiagnosisSeverity::Warning,
                subject: label.clone(),
                evidence: evidence([("count", *count as f64), ("threshold", FEW_SAMPLES as f64)]),
                explanation: format!(
                    "Class \"{label}\" has only {count} examples; the model may not learn it reliably."
                ),
            });
        }
    }

    for p in &report.profiles {
        if p.missing_count > 0 {
            out.push(Diagnosis {
                kind: DiagnosisKind::MissingValues,
                severity: DiagnosisSeverity::Info,
                subject: p.name.clone(),
                evidence: evidence([
                    ("missing_count", p.missing_count as f64),
                    ("row_count", report.row_count as f64),
                ]),
                explanation: format!(
                    "Column \"{}\" is empty in {} of {} rows.",
                    p.name, p.missing_count, report.row_count
                ),
            });
        }
    }

    if report.duplicate_row_fraction > DUPLICATE_FRACTION {
        out.push(Diagnosis {
            kind: DiagnosisKind::DuplicateRows,
            severity: DiagnosisSeverity::Warning,
            subject: String::new(),
            evidence: evidence([
                ("duplicate_row_fraction", report.duplicate_row_fraction),
                ("threshold", DUPLICATE_FRACTION),
            ]),
            explanation: format!(
                "{:.0}% of rows are exact duplicates; test scores may look better than they are.",
                report.duplicate_row_fraction * 100.0
            ),
        });
    }

    if let Some(eval) = eval {
        if let Some((label, recall)) = eval.min_recall() {
            if eval.macro_f1 >= STRONG_MACRO_F1 && recall <= WEAK_RECALL {
                out.push(Diagnosis {
                    kind: DiagnosisKind::LowMinorityRecall,
                    severity: DiagnosisSeverity::Warning,
                    subject: label.to_string(),
                    evidence: evidence([("macro_f1", eval.macro_f1), ("recall", recall)]),
                    explanation: format!(
                        "The overall F1 of {:.2} hides that only {:.0}% of \"{label}\" examples are found.",
                        eval.macro_f1,
                        recall * 100.0
                    ),
                });
            }
        }
    }
    out
}
