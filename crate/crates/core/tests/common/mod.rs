//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance target (which includes this file by path from the app crate).
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use novapipe_core::config::{default_config, PreflightCode, Strategy, TrainingConfig};
use novapipe_core::eval::{EvaluationReport, FEW_SAMPLES};
use novapipe_core::features::SparseVector;
use novapipe_core::guidance::{self, catalog, GuidanceMessage, Tier};
use novapipe_core::intake::{profile_dataset, Dataset, Row};
use novapipe_core::train::{loss_and_gradient, Batch, LinearModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn table(columns: &[&str], rows: Vec<Vec<Option<&str>>>) -> Dataset {
    let rows: Vec<Row> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|c| c.map(str::to_string)).collect())
        .collect();
    Dataset::new(columns.iter().map(|c| c.to_string()).collect(), rows).unwrap()
}

pub fn defaults(d: &Dataset, strategy: Strategy) -> TrainingConfig {
    let mut cfg = default_config(&profile_dataset(d), "label").unwrap();
    cfg.strategy = strategy;
    cfg
}

// ---------------------------------------------------------------- metrics

/// Per-class figures recomputed straight from the label vectors.
#[derive(Debug)]
pub struct BruteForce {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub counts: Vec<Vec<u64>>,
}

pub fn brute_force(y_true: &[String], y_pred: &[String], labels: &[String]) -> BruteForce {
    let n = y_true.len();
    let pairs = || y_true.iter().zip(y_pred);
    let counts: Vec<Vec<u64>> = labels
        .iter()
        .map(|t| {
            labels
                .iter()
                .map(|p| pairs().filter(|(a, b)| *a == t && *b == p).count() as u64)
                .collect()
        })
        .collect();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut f1 = Vec::new();
    let mut support = Vec::new();
    for c in labels {
        let tp = pairs().filter(|(a, b)| *a == c && *b == c).count();
        let predicted = y_pred.iter().filter(|p| *p == c).count();
        let actual = y_true.iter().filter(|t| *t == c).count();
        let p = frac(tp, predicted);
        let r = frac(tp, actual);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        support.push(actual as u64);
    }
    let correct = pairs().filter(|(a, b)| a == b).count();
    let macro_f1 = f1.iter().sum::<f64>() / labels.len() as f64;
    let weighted_f1 = if n == 0 {
        0.0
    } else {
        f1.iter().zip(&support).map(|(f, s)| f * *s as f64).sum::<f64>() / n as f64
    };
    BruteForce {
        accuracy: frac(correct, n),
        precision,
        recall,
        f1,
        support,
        macro_f1,
        weighted_f1,
        counts,
    }
}

/// First field where `report` and `oracle` differ by more than `tol`.
pub fn compare_report(
    report: &EvaluationReport,
    oracle: &BruteForce,
    labels: &[String],
    tol: f64,
) -> Result<(), String> {
    let close = |what: &str, a: f64, b: f64| {
        if (a - b).abs() <= tol {
            Ok(())
        } else {
            Err(format!("{what}: {a} vs oracle {b}"))
        }
    };
    close("accuracy", report.accuracy, oracle.accuracy)?;
    close("macro_f1", report.macro_f1, oracle.macro_f1)?;
    close("weighted_f1", report.weighted_f1, oracle.weighted_f1)?;
    if report.confusion.counts != oracle.counts {
        return Err("confusion counts".into());
    }
    let keys: Vec<&String> = report.per_class.keys().collect();
    if keys != labels.iter().collect::<Vec<_>>() {
        return Err("per-class order".into());
    }
    for (i, (label, m)) in report.per_class.iter().enumerate() {
        close(&format!("precision[{label}]"), m.precision, oracle.precision[i])?;
        close(&format!("recall[{label}]"), m.recall, oracle.recall[i])?;
        close(&format!("f1[{label}]"), m.f1, oracle.f1[i])?;
        if m.support != oracle.support[i] {
            return Err(format!("support[{label}]"));
        }
    }
    Ok(())
}

/// Random labelled vectors with `n <= 50` and `K <= 5`.
pub fn random_labelling(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>, Vec<String>) {
    let k = rng.random_range(1..=5);
    let n = rng.random_range(0..=50);
    let labels: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
    let draw = |rng: &mut ChaCha8Rng| labels[rng.random_range(0..k)].clone();
    let y_true: Vec<String> = (0..n).map(|_| draw(rng)).collect();
    let y_pred: Vec<String> = (0..n).map(|_| draw(rng)).collect();
    (y_true, y_pred, labels)
}

// --------------------------------------------------------------- gradient

pub struct Problem {
    pub model: LinearModel,
    pub inputs: Vec<SparseVector>,
    pub labels: Vec<usize>,
    pub lambda: f64,
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let dims = rng.random_range(2..=8);
    let k = rng.random_range(2..=5);
    let n = rng.random_range(1..=10);
    let weights = (0..dims * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = LinearModel::from_parts(dims, k, weights, bias).unwrap();
    let inputs = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..dims)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(-2.0..2.0)
                    }
                })
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    Problem {
        model,
        inputs,
        labels,
        lambda: rng.random_range(0.0..0.1),
    }
}

fn loss_of(p: &Problem, model: &LinearModel) -> f64 {
    let batch = Batch {
        inputs: p.inputs.iter().collect(),
        labels: p.labels.clone(),
    };
    loss_and_gradient(model, &batch, p.lambda).unwrap().0
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `eps`, over every weight and bias.
/// Entries are compared relative to `max(|a|, |b|, 1e-6)`.
pub fn gradient_error(p: &Problem, eps: f64) -> f64 {
    let batch = Batch {
        inputs: p.inputs.iter().collect(),
        labels: p.labels.clone(),
    };
    let (_, grad) = loss_and_gradient(&p.model, &batch, p.lambda).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst = 0.0f64;
    for i in 0..p.model.weights().len() {
        let mut plus = p.model.clone();
        plus.weights_mut()[i] += eps;
        let mut minus = p.model.clone();
        minus.weights_mut()[i] -= eps;
        let numeric = (loss_of(p, &plus) - loss_of(p, &minus)) / (2.0 * eps);
        worst = worst.max(rel(grad.weights[i], numeric));
    }
    for i in 0..p.model.bias().len() {
        let mut plus = p.model.clone();
        plus.bias_mut()[i] += eps;
        let mut minus = p.model.clone();
        minus.bias_mut()[i] -= eps;
        let numeric = (loss_of(p, &plus) - loss_of(p, &minus)) / (2.0 * eps);
        worst = worst.max(rel(grad.bias[i], numeric));
    }
    worst
}

// -------------------------------------------------------------- preflight

/// A clean two-class table: `text` and `label`, plus an all-missing
/// `blank` column, 12 rows per class.
pub fn preflight_table(target: impl Fn(usize) -> Option<&'static str>) -> Dataset {
    let rows = (0..24)
        .map(|i| {
            let text = if i % 2 == 0 { "red apple pie" } else { "blue ocean wave" };
            vec![Some(text), None, target(i)]
        })
        .collect();
    table(&["text", "blank", "label"], rows)
}

fn cfg_for(inputs: &[&str], target: &str) -> TrainingConfig {
    TrainingConfig {
        dataset_id: String::new(),
        input_columns: inputs.iter().map(|s| s.to_string()).collect(),
        target_column: target.to_string(),
        strategy: Strategy::Flat,
        seed: 42,
        split_ratios: Default::default(),
        backend_id: "reference-linear".into(),
        hyperparameters: Default::default(),
    }
}

/// `(expected code, dataset, config)`; `None` marks the clean fixture.
pub fn preflight_matrix() -> Vec<(Option<PreflightCode>, Dataset, TrainingConfig)> {
    let two = |i: usize| Some(if i.is_multiple_of(2) { "fruit" } else { "sea" });
    let clean = preflight_table(two);
    vec![
        (None, clean.clone(), cfg_for(&["text"], "label")),
        (
            Some(PreflightCode::TargetMissing),
            clean.clone(),
            cfg_for(&["text"], "category"),
        ),
        (
            Some(PreflightCode::InputMissing),
            clean.clone(),
            cfg_for(&["text", "headline"], "label"),
        ),
        (
            Some(PreflightCode::TargetInInputs),
            clean.clone(),
            cfg_for(&["text", "label"], "label"),
        ),
        (
            Some(PreflightCode::SingleClass),
            preflight_table(|_| Some("fruit")),
            cfg_for(&["text"], "label"),
        ),
        (
            Some(PreflightCode::TooFewSamplesPerClass),
            preflight_table(|i| Some(if i < 19 { "fruit" } else { "sea" })),
            cfg_for(&["text"], "label"),
        ),
        (
            Some(PreflightCode::AllMissingInput),
            clean,
            cfg_for(&["text", "blank"], "label"),
        ),
        (
            Some(PreflightCode::EmptyDataset),
            preflight_table(|_| None),
            cfg_for(&["text"], "label"),
        ),
    ]
}

// --------------------------------------------------------------- guidance

pub fn golden_dir() -> PathBuf {
    // both crates live under crates/, so this resolves from either
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn fixture_slot(name: &str) -> String {
    match name {
        "metric" => catalog().metrics["f1"].name.clone(),
        "value" => "0.93".into(),
        "band" => "high".into(),
        "definition" => catalog().metrics["f1"].definition.clone(),
        "macro_f1" => "0.85".into(),
        "class" => "sports".into(),
        "recall" => "0.30".into(),
        "classes" => "\"science\", \"tech\"".into(),
        "min_support" => FEW_SAMPLES.to_string(),
        "rows" => "400".into(),
        "columns" => "3".into(),
        "target" => "label".into(),
        "inputs" => "\"title\", \"body\"".into(),
        "imbalance_ratio" => "10.0".into(),
        other => panic!("no fixture value for slot {other:?}; add one"),
    }
}

pub fn weak_minority_report() -> EvaluationReport {
    use novapipe_core::eval::{ClassMetrics, ConfusionMatrix};
    let metrics = |recall: f64, support: u64| ClassMetrics {
        precision: 0.9,
        recall,
        f1: 0.85,
        support,
    };
    let per_class: indexmap::IndexMap<String, ClassMetrics> = [
        ("news".to_string(), metrics(0.95, 120)),
        ("sports".to_string(), metrics(0.3, 40)),
        ("tech".to_string(), metrics(0.9, 60)),
    ]
    .into_iter()
    .collect();
    EvaluationReport {
        accuracy: 0.88,
        confusion: ConfusionMatrix::zeros(per_class.keys().cloned().collect()),
        per_class,
        macro_f1: 0.85,
        weighted_f1: 0.86,
        stage_reports: None,
    }
}

/// Every catalog template rendered with fixed slot values, plus the
/// documented operation examples.
pub fn golden_cases() -> Vec<(String, Vec<GuidanceMessage>)> {
    let mut out = Vec::new();
    for t in &catalog().templates {
        let slots: BTreeMap<String, String> = t.slots().into_iter().map(|s| (s.clone(), fixture_slot(&s))).collect();
        out.push((
            format!("template.{}", t.id),
            vec![catalog().render(&t.id, &slots).unwrap()],
        ));
    }
    let explain = |m: &str, v: f64, tier: Tier| guidance::explain_metric(m, v, tier).unwrap();
    out.push(("explain.f1-high.novice".into(), vec![explain("f1", 0.93, Tier::Novice)]));
    out.push((
        "explain.accuracy-medium.novice".into(),
        vec![explain("accuracy", 0.5, Tier::Novice)],
    ));
    out.push((
        "explain.accuracy-medium.experienced".into(),
        vec![explain("accuracy", 0.5, Tier::Experienced)],
    ));
    out.push((
        "explain.recall-low.novice".into(),
        vec![explain("recall", 0.2, Tier::Novice)],
    ));
    out.push((
        "cues.weak-minority".into(),
        guidance::reliance_cues(&weak_minority_report()),
    ));
    out
}

/// Compares every golden case with its file, rewriting the files instead
/// when `UPDATE_GOLDEN` is set. Returns the names that differ.
pub fn golden_mismatches() -> Vec<String> {
    let dir = golden_dir();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut bad = Vec::new();
    for (name, messages) in golden_cases() {
        let path = dir.join(format!("{name}.json"));
        let rendered = serde_json::to_string_pretty(&messages).unwrap() + "\n";
        if update {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &rendered).unwrap();
        } else if std::fs::read_to_string(&path).ok().as_deref() != Some(rendered.as_str()) {
            bad.push(name);
        }
    }
    bad
}

// ------------------------------------------------------------- inference

/// `n` random input maps over the `title` and `body` columns, mixing words
/// the generators use with unseen ones.
pub fn random_inputs(seed: u64, n: usize) -> Vec<BTreeMap<String, String>> {
    let mut rng = rng(seed);
    let pool = [
        "real", "fake", "common", "world", "sport", "tech", "sci", "gadget", "zzz", "alpha",
    ];
    let words = |rng: &mut ChaCha8Rng, max: usize| {
        let len = rng.random_range(0..=max);
        (0..len)
            .map(|_| format!("{}{}", pool[rng.random_range(0..pool.len())], rng.random_range(0..60)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (0..n)
        .map(|_| {
            let title = words(&mut rng, 4);
            let body = words(&mut rng, 20);
            [("title".to_string(), title), ("body".to_string(), body)].into()
        })
        .collect()
}
