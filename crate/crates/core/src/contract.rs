//! The model artifact and its inference contract.
//!
//! An artifact is a directory with three files:
//!
//! * `metadata.json`: the [`ModelMetadata`] record, UTF-8 JSON.
//! * `features.json`: the fitted [`FeatureSpec`]; its SHA-256 is
//!   `feature_spec_digest`.
//! * `weights.bin`: little-endian IEEE-754 binary64 values. First the weight
//!   matrix of every model (the flat model, or each cascade stage in plan
//!   order), each row-major `hash_dimensions x classes`; then the bias
//!   vector of every model in the same order. Its SHA-256 is
//!   `artifact_checksum`.
//!
//! Everything needed to serve predictions is read back from these files;
//! the training data is never consulted.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::CascadePlan;
use crate::config::{Strategy, TrainingConfig};
use crate::eval::EvaluationReport;
use crate::features::{join_cells, vectorize, FeatureSpec, LabelEncoder};
use crate::intake::{ColumnKind, DataReport};
use crate::train::{argmax, LinearModel, TrainedModel};

pub const ARTIFACT_VERSION: u32 = 1;
pub const CHECKSUM_ALGORITHM: &str = "sha256";
pub const METADATA_FILE: &str = "metadata.json";
pub const FEATURES_FILE: &str = "features.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const WEIGHTS_LAYOUT: &str = "f64-le; weight matrices of all models in order (row-major hash_dimensions x classes), then bias vectors of all models in order; flat = 1 model, cascade = 1 model per stage";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractError {
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("model and metadata disagree: {0}")]
    InconsistentPair(String),
    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(&'static str),
    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error("invalid inference inputs")]
    Inputs(Vec<InputError>),
}

impl From<std::io::Error> for ContractError {
    fn from(e: std::io::Error) -> Self {
        ContractError::IoFailure(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputField {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub model_id: String,
    pub created_at: DateTime<Utc>,
    pub strategy: Strategy,
    pub backend_id: String,
    pub input_schema: Vec<InputField>,
    pub label_order: Vec<String>,
    #[serde(default)]
    pub cascade_plan: Option<CascadePlan>,
    pub feature_spec_digest: String,
    pub metrics_snapshot: EvaluationReport,
    pub artifact_version: u32,
    pub checksum_algorithm: String,
    pub weights_layout: String,
    pub artifact_checksum: String,
}

fn models_of(model: &TrainedModel) -> Vec<&LinearModel> {
    match (&model.flat_model, &model.stage_models) {
        (Some(m), _) => vec![m],
        (None, Some(stages)) => stages.iter().collect(),
        (None, None) => Vec::new(),
    }
}

/// Serializes the weights payload in the documented layout.
pub fn encode_weights(model: &TrainedModel) -> Vec<u8> {
    let models = models_of(model);
    let len: usize = models.iter().map(|m| m.weights().len() + m.bias().len()).sum();
    let mut out = Vec::with_capacity(len * 8);
    for m in &models {
        for w in m.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    for m in &models {
        for b in m.bias() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

fn decode_weights(bytes: &[u8], dims: usize, classes: usize, count: usize) -> Result<Vec<LinearModel>, ContractError> {
    let per_matrix = dims
        .checked_mul(classes)
        .ok_or_else(|| ContractError::CorruptArtifact("weight shape overflows".into()))?;
    let expected = per_matrix
        .checked_add(classes)
        .and_then(|v| v.checked_mul(count))
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| ContractError::CorruptArtifact("weight shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(ContractError::CorruptArtifact(format!(
            "weights payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let matrices: Vec<Vec<f64>> = (0..count).map(|_| values.by_ref().take(per_matrix).collect()).collect();
    let mut models = Vec::with_capacity(count);
    for weights in matrices {
        let bias: Vec<f64> = values.by_ref().take(classes).collect();
        let m = LinearModel::from_parts(dims, classes, weights, bias)
            .map_err(|_| ContractError::CorruptArtifact("weight shape".into()))?;
        if !m.is_finite() {
            return Err(ContractError::CorruptArtifact("non-finite weight".into()));
        }
        models.push(m);
    }
    Ok(models)
}

/// Assembles the metadata record for a freshly trained model.
pub fn build_metadata(
    model: &TrainedModel,
    cfg: &TrainingConfig,
    profile: &DataReport,
    report: &EvaluationReport,
) -> ModelMetadata {
    let input_schema: Vec<InputField> = cfg
        .input_columns
        .iter()
        .map(|name| InputField {
            name: name.clone(),
            kind: profile
                .profile(name)
                .map(|p| p.inferred_kind)
                .unwrap_or(ColumnKind::Text),
        })
        .collect();
    let artifact_checksum = crate::sha256_hex(&encode_weights(model));
    let feature_spec_digest = model.feature_spec.digest();
    let identity = serde_json::json!({
        "artifact_checksum": artifact_checksum,
        "feature_spec_digest": feature_spec_digest,
        "strategy": model.strategy,
        "backend_id": cfg.backend_id,
        "input_schema": input_schema,
        "label_order": model.encoder.labels(),
    });
    let model_id = crate::sha256_hex(identity.to_string().as_bytes())[..16].to_string();
    ModelMetadata {
        model_id,
        created_at: Utc::now(),
        strategy: model.strategy,
        backend_id: cfg.backend_id.clone(),
        input_schema,
        label_order: model.encoder.labels().to_vec(),
        cascade_plan: model.cascade_plan.clone(),
        feature_spec_digest,
        metrics_snapshot: report.clone(),
        artifact_version: ARTIFACT_VERSION,
        checksum_algorithm: CHECKSUM_ALGORITHM.to_string(),
        weights_layout: WEIGHTS_LAYOUT.to_string(),
        artifact_checksum,
    }
}

fn check_pair(model: &TrainedModel, meta: &ModelMetadata) -> Result<(), ContractError> {
    model.check().map_err(ContractError::InconsistentPair)?;
    let mismatch = |what: &str| Err(ContractError::InconsistentPair(format!("{what} differs")));
    if meta.strategy != model.strategy {
        return mismatch("strategy");
    }
    if meta.label_order != model.encoder.labels() {
        return mismatch("label order");
    }
    if meta.cascade_plan != model.cascade_plan {
        return mismatch("cascade plan");
    }
    if meta.input_schema.is_empty() {
        return Err(ContractError::InconsistentPair("empty input schema".into()));
    }
    if meta.feature_spec_digest != model.feature_spec.digest() {
        return mismatch("feature spec digest");
    }
    Ok(())
}

/// Writes the artifact directory at `destination`. Files are written to a
/// sibling temporary directory which is then renamed into place.
pub fn save_model(
    model: &TrainedModel,
    metadata: &ModelMetadata,
    destination: &Path,
) -> Result<PathBuf, ContractError> {
    check_pair(model, metadata)?;
    let weights = encode_weights(model);
    let checksum = crate::sha256_hex(&weights);
    if checksum != metadata.artifact_checksum {
        return Err(ContractError::InconsistentPair(
            "artifact checksum differs from weights".into(),
        ));
    }
    let metadata_json = serde_json::to_vec_pretty(metadata).expect("metadata serializes");

    let parent = destination
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = destination
        .file_name()
        .ok_or_else(|| ContractError::IoFailure("destination has no file name".into()))?
        .to_string_lossy();
    let nanos = Utc::now().timestamp_nanos_opt().unwrap_or_default();
    let tmp = parent.join(format!(".{name}.tmp-{}-{nanos}", std::process::id()));
    fs::create_dir(&tmp)?;
    let written = (|| -> std::io::Result<()> {
        fs::write(tmp.join(FEATURES_FILE), model.feature_spec.to_json_bytes())?;
        fs::write(tmp.join(WEIGHTS_FILE), &weights)?;
        fs::write(tmp.join(METADATA_FILE), &metadata_json)?;
        if destination.exists() {
            fs::remove_dir_all(destination)?;
        }
        fs::rename(&tmp, destination)
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e.into());
    }
    Ok(destination.to_path_buf())
}

/// Reads an artifact directory written by [`save_model`].
pub fn load_model(location: &Path) -> Result<(TrainedModel, ModelMetadata), ContractError> {
    let read = |file: &str| fs::read(location.join(file));
    let metadata = read(METADATA_FILE)?;
    let features = read(FEATURES_FILE)?;
    let weights = read(WEIGHTS_FILE)?;
    decode_artifact(&metadata, &features, &weights)
}

/// Rebuilds a model from the raw bytes of the three artifact files.
pub fn decode_artifact(
    metadata: &[u8],
    features: &[u8],
    weights: &[u8],
) -> Result<(TrainedModel, ModelMetadata), ContractError> {
    let corrupt = |e: serde_json::Error| ContractError::CorruptArtifact(e.to_string());
    let raw: serde_json::Value = serde_json::from_slice(metadata).map_err(corrupt)?;
    match raw.get("artifact_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(ARTIFACT_VERSION) => {}
        Some(v) => return Err(ContractError::UnsupportedVersion(v)),
        None => return Err(ContractError::CorruptArtifact("missing artifact_version".into())),
    }
    let meta: ModelMetadata = serde_json::from_value(raw).map_err(corrupt)?;
    if meta.checksum_algorithm != CHECKSUM_ALGORITHM {
        return Err(ContractError::CorruptArtifact(format!(
            "unknown checksum algorithm {:?}",
            meta.checksum_algorithm
        )));
    }
    if crate::sha256_hex(features) != meta.feature_spec_digest {
        return Err(ContractError::ChecksumMismatch(FEATURES_FILE));
    }
    let feature_spec: FeatureSpec = serde_json::from_slice(features).map_err(corrupt)?;
    feature_spec
        .validate()
        .map_err(|e| ContractError::CorruptArtifact(e.to_string()))?;
    let encoder = LabelEncoder::from_ordered(meta.label_order.clone())
        .map_err(|e| ContractError::CorruptArtifact(e.to_string()))?;

    let (classes, count) = match meta.strategy {
        Strategy::Flat => (encoder.len(), 1),
        Strategy::Cascade => (2, encoder.len() - 1),
    };
    let mut models = decode_weights(weights, feature_spec.dims(), classes, count)?;
    if crate::sha256_hex(weights) != meta.artifact_checksum {
        return Err(ContractError::ChecksumMismatch(WEIGHTS_FILE));
    }
    let model = match meta.strategy {
        Strategy::Flat => TrainedModel {
            strategy: Strategy::Flat,
            flat_model: models.pop(),
            stage_models: None,
            encoder,
            feature_spec,
            cascade_plan: None,
        },
        Strategy::Cascade => TrainedModel {
            strategy: Strategy::Cascade,
            flat_model: None,
            stage_models: Some(models),
            encoder,
            feature_spec,
            cascade_plan: meta.cascade_plan.clone(),
        },
    };
    check_pair(&model, &meta).map_err(|e| ContractError::CorruptArtifact(e.to_string()))?;
    Ok((model, meta))
}

/// One field of a generated inference form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDescriptor {
    pub name: String,
    pub kind: ColumnKind,
    pub required: bool,
    pub description: String,
}

pub fn input_descriptors(metadata: &ModelMetadata) -> Vec<InputDescriptor> {
    metadata
        .input_schema
        .iter()
        .map(|f| InputDescriptor {
            name: f.name.clone(),
            kind: f.kind,
            required: true,
            description: match f.kind {
                ColumnKind::Text => format!("Free text for \"{}\", like the training data.", f.name),
                ColumnKind::Numeric => format!("A number for \"{}\", like the training data.", f.name),
                ColumnKind::Categorical => {
                    format!("One of the values seen in \"{}\" during training.", f.name)
                }
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "field")]
pub enum InputError {
    MissingInput(String),
    UnknownInput(String),
}

/// Every schema column must be present (empty text is allowed and means
/// missing) and no other key may appear. Missing fields are reported in
/// schema order, then unknown keys in sorted order.
pub fn validate_inputs(metadata: &ModelMetadata, inputs: &BTreeMap<String, String>) -> Result<(), Vec<InputError>> {
    let mut errors: Vec<InputError> = metadata
        .input_schema
        .iter()
        .filter(|f| !inputs.contains_key(&f.name))
        .map(|f| InputError::MissingInput(f.name.clone()))
        .collect();
    errors.extend(
        inputs
            .keys()
            .filter(|k| !metadata.input_schema.iter().any(|f| &f.name == *k))
            .map(|k| InputError::UnknownInput(k.clone())),
    );
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub positive_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    /// Probabilities in label order.
    pub distribution: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_trace: Option<Vec<StageTrace>>,
}

/// Distribution over `label_order` and its argmax (earliest label on ties).
pub fn prediction_from(labels: &[String], distribution: Vec<f64>, stage_positives: Option<Vec<f64>>) -> Prediction {
    let best = argmax(&distribution);
    Prediction {
        label: labels[best].clone(),
        confidence: distribution[best],
        distribution: labels.iter().cloned().zip(distribution).collect(),
        stage_trace: stage_positives.map(|ps| {
            ps.into_iter()
                .enumerate()
                .map(|(stage, positive_probability)| StageTrace {
                    stage,
                    positive_probability,
                })
                .collect()
        }),
    }
}

/// Runs inference configured only by the model and its metadata.
pub fn predict(
    model: &TrainedModel,
    metadata: &ModelMetadata,
    inputs: &BTreeMap<String, String>,
) -> Result<Prediction, ContractError> {
    validate_inputs(metadata, inputs).map_err(ContractError::Inputs)?;
    let text = join_cells(metadata.input_schema.iter().map(|f| {
        let v = inputs[&f.name].as_str();
        (!v.is_empty()).then_some(v)
    }));
    let x = vectorize(&text, &model.feature_spec);
    let out = model.output(&x);
    Ok(prediction_from(
        &metadata.label_order,
        out.distribution,
        out.stage_positives,
    ))
}
