//! One-click training and the pluggable backend boundary.

mod backend;
mod linear;

pub use backend::{backend, fit, Backend, ReferenceLinear};
pub use linear::{argmax, loss_and_gradient, softmax, Batch, Gradient, LinearModel};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{build_cascade_plan, compose_distribution, stage_subset, CascadeError, CascadePlan};
use crate::config::{may_train, preflight_check, ConfigError, PreflightIssue, Strategy, TrainingConfig};
use crate::contract::{build_metadata, ModelMetadata};
use crate::eval::{classification_report, stage_reports, ConfusionMatrix, EvalError, EvaluationReport};
use crate::features::{
    encode_labels, fit_features, join_inputs, stratified_split, vectorize, FeatureError, FeatureSpec, LabelEncoder,
    Partition, SparseVector, SplitAssignment, DEFAULT_HASH_DIMENSIONS,
};
use crate::intake::{profile_dataset, Dataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("input and model shapes disagree")]
    ShapeMismatch,
    #[error("unknown training backend {0:?}")]
    UnknownBackend(String),
    #[error("training diverged in epoch {epoch}: the loss is no longer finite")]
    NonFiniteLoss { epoch: usize },
}

/// Anything that can stop [`one_click_train`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("pre-flight checks failed with {} blocking issue(s)", .0.iter().filter(|i| i.is_blocking()).count())]
    Preflight(Vec<PreflightIssue>),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A featurized row; `label` indexes the label encoder (or 0/1 inside a
/// cascade stage).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Example {
    pub features: SparseVector,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProgress {
    pub fraction_done: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_stage: Option<usize>,
    pub message: String,
}

impl TrainingProgress {
    pub fn queued() -> Self {
        TrainingProgress {
            fraction_done: 0.0,
            current_stage: None,
            message: "Waiting to start".to_string(),
        }
    }
}

/// Forwards progress to a sink while keeping `fraction_done` non-decreasing.
struct Reporter<'a> {
    sink: &'a mut dyn FnMut(TrainingProgress),
    last: f64,
}

impl Reporter<'_> {
    fn send(&mut self, fraction: f64, current_stage: Option<usize>, message: String) {
        self.last = self.last.max(fraction.clamp(0.0, 1.0));
        (self.sink)(TrainingProgress {
            fraction_done: self.last,
            current_stage,
            message,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub strategy: Strategy,
    pub flat_model: Option<LinearModel>,
    pub stage_models: Option<Vec<LinearModel>>,
    pub encoder: LabelEncoder,
    pub feature_spec: FeatureSpec,
    pub cascade_plan: Option<CascadePlan>,
}

/// Per-row output of a trained model, indexed like the label encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub distribution: Vec<f64>,
    /// Positive-class probability of each cascade stage.
    pub stage_positives: Option<Vec<f64>>,
}

impl TrainedModel {
    /// Checks that the parts agree with the strategy and with each other.
    pub fn check(&self) -> Result<(), String> {
        let k = self.encoder.len();
        let dims = self.feature_spec.dims();
        match (self.strategy, &self.flat_model, &self.stage_models, &self.cascade_plan) {
            (Strategy::Flat, Some(m), None, _) => {
                if m.classes() != k || m.dims() != dims {
                    return Err(format!(
                        "flat model is {}x{}, expected {dims}x{k}",
                        m.dims(),
                        m.classes()
                    ));
                }
            }
            (Strategy::Cascade, None, Some(stages), Some(plan)) => {
                if stages.len() + 1 != k {
                    return Err(format!("{} stage models for {k} classes", stages.len()));
                }
                if plan.ordered_classes != self.encoder.labels() || plan.stages.len() != stages.len() {
                    return Err("cascade plan does not match the label order".to_string());
                }
                if let Some(m) = stages.iter().find(|m| m.classes() != 2 || m.dims() != dims) {
                    return Err(format!(
                        "stage model is {}x{}, expected {dims}x2",
                        m.dims(),
                        m.classes()
                    ));
                }
            }
            _ => return Err("model parts do not match the strategy".to_string()),
        }
        Ok(())
    }

    pub fn output(&self, x: &SparseVector) -> ModelOutput {
        match (&self.flat_model, &self.stage_models) {
            (Some(m), _) => ModelOutput {
                distribution: m.probabilities(x),
                stage_positives: None,
            },
            (None, Some(stages)) => {
                let positives: Vec<f64> = stages.iter().map(|m| m.probabilities(x)[1]).collect();
                let distribution = compose_distribution(&positives).expect("softmax outputs lie in [0, 1]");
                ModelOutput {
                    distribution,
                    stage_positives: Some(positives),
                }
            }
            (None, None) => unreachable!("a trained model always has weights"),
        }
    }

    pub fn predict_index(&self, x: &SparseVector) -> usize {
        argmax(&self.output(x).distribution)
    }
}

/// The split, fitted encoder and featurizer, and featurized partitions.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: SplitAssignment,
    pub encoder: LabelEncoder,
    pub feature_spec: FeatureSpec,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Drops rows without a target, splits, encodes labels and fits features on
/// the training partition.
pub fn prepare(d: &Dataset, cfg: &TrainingConfig) -> Result<Prepared, PipelineError> {
    let t = d
        .column_index(&cfg.target_column)
        .ok_or_else(|| FeatureError::UnknownColumn(cfg.target_column.clone()))?;
    let dataset = d.filter_rows(|r| r[t].is_some());
    let split = stratified_split(&dataset, &cfg.target_column, &cfg.split_ratios, cfg.seed)?;
    let label_of = |i: usize| dataset.rows()[i][t].as_deref().expect("missing targets were dropped");

    let encoder = encode_labels(split.rows_in(Partition::Train).map(label_of))?;
    let texts = dataset
        .rows()
        .iter()
        .map(|r| join_inputs(&dataset, r, &cfg.input_columns))
        .collect::<Result<Vec<_>, _>>()?;
    let feature_spec = fit_features(
        split.rows_in(Partition::Train).map(|i| texts[i].as_str()),
        DEFAULT_HASH_DIMENSIONS,
    )?;

    let featurize = |p: Partition| {
        split
            .rows_in(p)
            .map(|i| Example {
                features: vectorize(&texts[i], &feature_spec),
                label: encoder
                    .index(label_of(i))
                    .expect("every class reaches the training split"),
            })
            .collect::<Vec<_>>()
    };
    let (train, val, test) = (
        featurize(Partition::Train),
        featurize(Partition::Val),
        featurize(Partition::Test),
    );
    Ok(Prepared {
        dataset,
        split,
        encoder,
        feature_spec,
        train,
        val,
        test,
    })
}

/// Seed for cascade stage `index`, distinct from the flat-model seed.
fn stage_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Trains the model described by `cfg` on prepared partitions.
pub fn train_prepared(
    p: &Prepared,
    cfg: &TrainingConfig,
    progress: &mut dyn FnMut(TrainingProgress),
) -> Result<TrainedModel, PipelineError> {
    let mut reporter = Reporter {
        sink: progress,
        last: 0.0,
    };
    train_with_reporter(p, cfg, &mut reporter)
}

fn train_with_reporter(
    p: &Prepared,
    cfg: &TrainingConfig,
    reporter: &mut Reporter<'_>,
) -> Result<TrainedModel, PipelineError> {
    let dims = p.feature_spec.dims();
    let hp = &cfg.hyperparameters;
    let (flat_model, stage_models, cascade_plan) = match cfg.strategy {
        Strategy::Flat => {
            let model = fit(
                &cfg.backend_id,
                &p.train,
                &p.val,
                dims,
                p.encoder.len(),
                hp,
                cfg.seed,
                &mut |epoch, total| {
                    reporter.send(
                        0.1 + 0.8 * epoch as f64 / total as f64,
                        None,
                        format!("Training epoch {epoch} of {total}"),
                    )
                },
            )?;
            (Some(model), None, None)
        }
        Strategy::Cascade => {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for ex in &p.train {
                *counts.entry(p.encoder.label(ex.label).to_string()).or_default() += 1;
            }
            let plan = build_cascade_plan(&counts)?;
            debug_assert_eq!(plan.ordered_classes, p.encoder.labels());
            let n_stages = plan.stages.len();
            let mut models = Vec::with_capacity(n_stages);
            for stage in &plan.stages {
                let train = stage_subset(&p.train, stage, &p.encoder)?;
                let val = stage_subset(&p.val, stage, &p.encoder).unwrap_or_default();
                let i = stage.index;
                let model = fit(
                    &cfg.backend_id,
                    &train,
                    &val,
                    dims,
                    2,
                    hp,
                    stage_seed(cfg.seed, i),
                    &mut |epoch, total| {
                        reporter.send(
                            0.1 + 0.8 * (i as f64 + epoch as f64 / total as f64) / n_stages as f64,
                            Some(i),
                            format!(
                                "Training stage {} of {n_stages} ({} vs rest), epoch {epoch} of {total}",
                                i + 1,
                                stage.positive_class
                            ),
                        )
                    },
                )?;
                models.push(model);
            }
            (None, Some(models), Some(plan))
        }
    };
    Ok(TrainedModel {
        strategy: cfg.strategy,
        flat_model,
        stage_models,
        encoder: p.encoder.clone(),
        feature_spec: p.feature_spec.clone(),
        cascade_plan,
    })
}

/// Scores `model` on `rows`, adding per-stage reports for cascades.
pub fn evaluate(model: &TrainedModel, rows: &[Example]) -> Result<EvaluationReport, EvalError> {
    let cm = ConfusionMatrix::from_indices(
        model.encoder.labels().to_vec(),
        rows.iter().map(|ex| (ex.label, model.predict_index(&ex.features))),
    );
    let mut report = classification_report(&cm);
    if model.strategy == Strategy::Cascade {
        report.stage_reports = Some(stage_reports(model, rows)?);
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: TrainedModel,
    pub report: EvaluationReport,
    pub metadata: ModelMetadata,
}

/// Runs the whole pipeline from a table and key parameters: pre-flight,
/// split, label encoding, featurization, training, test evaluation and
/// metadata assembly.
pub fn one_click_train(
    d: &Dataset,
    cfg: &TrainingConfig,
    progress: &mut dyn FnMut(TrainingProgress),
) -> Result<TrainingOutcome, PipelineError> {
    let mut reporter = Reporter {
        sink: progress,
        last: 0.0,
    };
    reporter.send(0.0, None, "Checking the data".to_string());
    let issues = preflight_check(d, cfg);
    if !may_train(&issues) {
        return Err(PipelineError::Preflight(issues));
    }
    cfg.validate()?;

    reporter.send(0.05, None, "Splitting and preparing the data".to_string());
    let prepared = prepare(d, cfg)?;
    let model = train_with_reporter(&prepared, cfg, &mut reporter)?;

    reporter.send(0.9, None, "Evaluating on the test split".to_string());
    let report = evaluate(&model, &prepared.test)?;
    let profile = profile_dataset(d);
    let metadata = build_metadata(&model, cfg, &profile, &report);
    reporter.send(1.0, None, format!("Model trained, F1-score={:.2}", report.macro_f1));
    Ok(TrainingOutcome {
        model,
        report,
        metadata,
    })
}
