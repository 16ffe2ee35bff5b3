mod common;

use common::*;
use novapipe_core::cascade::compose_distribution;
use novapipe_core::config::{Hyperparameters, Strategy};
use novapipe_core::eval::{classification_report, confusion_matrix};
use novapipe_core::train::{self, fit, loss_and_gradient, prepare, Batch, LinearModel, TrainError};
use rand::Rng;

#[test]
fn report_matches_brute_force() {
    let mut rng = rng(7);
    for case in 0..100 {
        let (y_true, y_pred, labels) = random_labelling(&mut rng);
        let cm = confusion_matrix(&y_true, &y_pred, &labels).unwrap();
        let report = classification_report(&cm);
        let oracle = brute_force(&y_true, &y_pred, &labels);
        if let Err(e) = compare_report(&report, &oracle, &labels, 1e-12) {
            panic!("case {case}: {e}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = rng(11);
    for case in 0..100 {
        let p = random_problem(&mut rng);
        let err = gradient_error(&p, 1e-5);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn composition_is_a_distribution() {
    let mut rng = rng(13);
    for _ in 0..1000 {
        let k = rng.random_range(2..=8);
        let ps: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.0..=1.0)).collect();
        let d = compose_distribution(&ps).unwrap();
        assert_eq!(d.len(), k);
        assert!(d.iter().all(|v| *v >= 0.0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let d = compose_distribution(&[0.2, 0.7]).unwrap();
    for (got, want) in d.iter().zip([0.2, 0.56, 0.24]) {
        assert!((got - want).abs() <= 1e-15, "{d:?}");
    }
}

#[test]
fn full_batch_descent_never_increases_loss() {
    let d = novapipe_core::synth::binary_news(120).generate(5);
    let p = prepare(&d, &defaults(&d, Strategy::Flat)).unwrap();
    let batch = Batch {
        inputs: p.train.iter().map(|ex| &ex.features).collect(),
        labels: p.train.iter().map(|ex| ex.label).collect(),
    };
    let mut model = LinearModel::zeros(p.feature_spec.dims(), p.encoder.len());
    let mut last = f64::INFINITY;
    for step in 0..50 {
        let (loss, grad) = loss_and_gradient(&model, &batch, 1e-4).unwrap();
        assert!(loss <= last, "step {step}: {loss} > {last}");
        last = loss;
        model.apply(&grad, 0.01);
    }
    assert!(last < 2f64.ln());
}

fn separable() -> novapipe_core::Dataset {
    let mut rng = rng(17);
    let rows = (0..200)
        .map(|i| {
            let class = if i % 2 == 0 { "left" } else { "right" };
            let text: Vec<String> = (0..6).map(|_| format!("{class}{}", rng.random_range(0..20))).collect();
            vec![Some(text.join(" ")), Some(class.to_string())]
        })
        .collect::<Vec<_>>();
    let rows = rows.iter().map(|r| r.iter().map(|c| c.as_deref()).collect()).collect();
    table(&["text", "label"], rows)
}

#[test]
fn separable_data_is_learned_within_ten_epochs() {
    let d = separable();
    let cfg = defaults(&d, Strategy::Flat);
    let p = prepare(&d, &cfg).unwrap();
    let hp = Hyperparameters::default();
    assert!(hp.epochs <= 10);
    let m = fit(
        "reference-linear",
        &p.train,
        &p.val,
        p.feature_spec.dims(),
        2,
        &hp,
        1,
        &mut |_, _| {},
    )
    .unwrap();
    let pairs = p.val.iter().map(|ex| (ex.label, m.predict_class(&ex.features)));
    let cm = novapipe_core::eval::ConfusionMatrix::from_indices(p.encoder.labels().to_vec(), pairs);
    assert_eq!(classification_report(&cm).macro_f1, 1.0);
}

#[test]
fn same_seed_same_weights() {
    let d = separable();
    let p = prepare(&d, &defaults(&d, Strategy::Flat)).unwrap();
    let hp = Hyperparameters::default();
    let run = || {
        fit(
            "reference-linear",
            &p.train,
            &p.val,
            p.feature_spec.dims(),
            2,
            &hp,
            9,
            &mut |_, _| {},
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |m: &LinearModel| {
        m.weights()
            .iter()
            .chain(m.bias())
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn huge_learning_rate_diverges() {
    let d = novapipe_core::synth::binary_news(200).generate(1);
    let mut cfg = defaults(&d, Strategy::Flat);
    cfg.hyperparameters.learning_rate = 1e6;
    let err = train::one_click_train(&d, &cfg, &mut |_| {}).unwrap_err();
    assert!(
        matches!(err, train::PipelineError::Train(TrainError::NonFiniteLoss { .. })),
        "{err:?}"
    );
}

#[test]
fn unknown_backend_is_rejected() {
    let err = fit(
        "gpu-transformer",
        &[],
        &[],
        4,
        2,
        &Hyperparameters::default(),
        0,
        &mut |_, _| {},
    )
    .unwrap_err();
    assert_eq!(err, TrainError::UnknownBackend("gpu-transformer".into()));
}
