//! Harnesses behind the fuzz targets in `fuzz/`. Each takes arbitrary bytes,
//! must never panic on rejected input, and asserts the invariants that hold
//! whenever the input is accepted. The corpus replay test calls the same
//! functions, so seeds are exercised by `cargo test` on stable.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use crate::config::{default_config, TrainingConfig};
use crate::contract::{self, decode_artifact, encode_weights, ContractError, ModelMetadata};
use crate::guidance::{self, GuidanceContext};
use crate::intake::{parse_csv, profile_dataset};
use crate::train::{one_click_train, TrainedModel};

/// CSV bytes: accepted tables survive a render and re-parse unchanged.
pub fn csv(data: &[u8]) {
    let Ok(d) = parse_csv(data) else { return };
    let again = parse_csv(d.to_csv().as_bytes()).expect("rendered CSV parses");
    assert_eq!(again.column_names(), d.column_names());
    assert_eq!(again.rows(), d.rows());
    let report = profile_dataset(&d);
    assert_eq!(report.row_count, d.row_count());
    assert_eq!(report.profiles.len(), d.column_names().len());
}

/// Training config JSON: accepted configs survive a JSON round trip.
pub fn training_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = TrainingConfig::from_json(text) else {
        return;
    };
    let back = TrainingConfig::from_json(&cfg.to_json()).expect("rendered config parses");
    assert_eq!(format!("{back:?}"), format!("{cfg:?}"));
    let _ = cfg.validate();
}

/// Splits one input into the three artifact files: two little-endian u32
/// lengths, then metadata, features and weights back to back.
pub fn split_artifact(data: &[u8]) -> Option<(&[u8], &[u8], &[u8])> {
    let len = |at: usize| -> Option<usize> {
        let b = data.get(at..at + 4)?;
        Some(u32::from_le_bytes(b.try_into().ok()?) as usize)
    };
    let (m, f) = (len(0)?, len(4)?);
    let rest = data.get(8..)?;
    let metadata = rest.get(..m)?;
    let features = rest.get(m..m.checked_add(f)?)?;
    Some((metadata, features, &rest[m + f..]))
}

/// Inverse of [`split_artifact`], used to build seeds.
pub fn join_artifact(metadata: &[u8], features: &[u8], weights: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((metadata.len() as u32).to_le_bytes());
    out.extend((features.len() as u32).to_le_bytes());
    out.extend([metadata, features, weights].concat());
    out
}

/// Artifact files: a decoded model re-encodes to the same weights and
/// answers a prediction.
pub fn artifact(data: &[u8]) {
    let Some((metadata, features, weights)) = split_artifact(data) else {
        return;
    };
    let (model, meta) = match decode_artifact(metadata, features, weights) {
        Ok(pair) => pair,
        Err(_) => return,
    };
    assert_eq!(encode_weights(&model), weights);
    let inputs = meta
        .input_schema
        .iter()
        .map(|f| (f.name.clone(), "fuzz".to_string()))
        .collect();
    let p = contract::predict(&model, &meta, &inputs).expect("schema-complete inputs predict");
    assert!(meta.label_order.contains(&p.label));
}

static FIXTURE: LazyLock<(TrainedModel, ModelMetadata)> = LazyLock::new(|| {
    let d = crate::synth::binary_news(60).generate(1);
    let cfg = default_config(&profile_dataset(&d), "label").expect("fixture has a label column");
    let outcome = one_click_train(&d, &cfg, &mut |_| {}).expect("fixture trains");
    (outcome.model, outcome.metadata)
});

/// Prediction request JSON (`{"column": "text", ...}`) against a small
/// fixed model: either a distribution over the labels or input errors.
pub fn predict_inputs(data: &[u8]) {
    let Ok(inputs) = serde_json::from_slice::<BTreeMap<String, String>>(data) else {
        return;
    };
    let (model, meta) = &*FIXTURE;
    match contract::predict(model, meta, &inputs) {
        Ok(p) => {
            let sum: f64 = p.distribution.values().sum();
            assert!((sum - 1.0).abs() < 1e-9, "distribution sums to {sum}");
            assert!(p.distribution.values().all(|v| (0.0..=1.0).contains(v)));
        }
        Err(ContractError::Inputs(errors)) => assert!(!errors.is_empty()),
        Err(e) => panic!("unexpected prediction error {e}"),
    }
}

/// Guidance context JSON: every message it yields keeps its numbers in
/// slots.
pub fn guidance_context(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ctx) = GuidanceContext::from_json(text) else {
        return;
    };
    let Ok(messages) = guidance::guide(&ctx) else { return };
    assert!(!messages.is_empty());
    for m in &messages {
        assert!(guidance::numbers_grounded(m), "{m:?}");
    }
}
