use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linear::{loss_and_gradient, Batch, LinearModel};
use super::{Example, TrainError};
use crate::config::{Hyperparameters, DEFAULT_BACKEND};
use crate::eval::{classification_report, ConfusionMatrix};

/// RNG stream used for mini-batch shuffling.
const SHUFFLE_STREAM: u64 = 2;

/// A trainer that turns featurized partitions into a linear model.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// `on_epoch(done, total)` is called after every epoch.
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &self,
        train: &[Example],
        val: &[Example],
        dims: usize,
        classes: usize,
        hp: &Hyperparameters,
        seed: u64,
        on_epoch: &mut dyn FnMut(usize, usize),
    ) -> Result<LinearModel, TrainError>;
}

/// Mini-batch gradient descent on regularized cross-entropy with seeded
/// shuffling. With early stopping on, the weights of the epoch with the
/// best validation macro-F1 are returned (earliest epoch on ties).
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceLinear;

impl Backend for ReferenceLinear {
    fn id(&self) -> &str {
        DEFAULT_BACKEND
    }

    fn fit(
        &self,
        train: &[Example],
        val: &[Example],
        dims: usize,
        classes: usize,
        hp: &Hyperparameters,
        seed: u64,
        on_epoch: &mut dyn FnMut(usize, usize),
    ) -> Result<LinearModel, TrainError> {
        let mut model = LinearModel::zeros(dims, classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SHUFFLE_STREAM);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best: Option<(f64, LinearModel)> = None;

        for epoch in 1..=hp.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(hp.batch_size.max(1)) {
                let batch = Batch {
                    inputs: chunk.iter().map(|&i| &train[i].features).collect(),
                    labels: chunk.iter().map(|&i| train[i].label).collect(),
                };
                let (loss, grad) = loss_and_gradient(&model, &batch, hp.l2_lambda)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch });
                }
                model.apply(&grad, hp.learning_rate);
            }
            if !model.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            if hp.early_stopping && !val.is_empty() {
                let score = macro_f1(&model, val);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, model.clone()));
                }
            }
            on_epoch(epoch, hp.epochs);
        }
        Ok(best.map(|(_, m)| m).unwrap_or(model))
    }
}

fn macro_f1(model: &LinearModel, rows: &[Example]) -> f64 {
    let labels = (0..model.classes()).map(|k| k.to_string()).collect();
    let cm = ConfusionMatrix::from_indices(
        labels,
        rows.iter().map(|ex| (ex.label, model.predict_class(&ex.features))),
    );
    classification_report(&cm).macro_f1
}

/// Looks up a registered backend.
pub fn backend(id: &str) -> Result<&'static dyn Backend, TrainError> {
    static REFERENCE: ReferenceLinear = ReferenceLinear;
    match id {
        DEFAULT_BACKEND => Ok(&REFERENCE),
        other => Err(TrainError::UnknownBackend(other.to_string())),
    }
}

/// Fits a model with the backend named `backend_id`.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    backend_id: &str,
    train: &[Example],
    val: &[Example],
    dims: usize,
    classes: usize,
    hp: &Hyperparameters,
    seed: u64,
    on_epoch: &mut dyn FnMut(usize, usize),
) -> Result<LinearModel, TrainError> {
    backend(backend_id)?.fit(train, val, dims, classes, hp, seed, on_epoch)
}
