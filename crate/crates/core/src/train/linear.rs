//! Multinomial logistic regression over sparse inputs.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::features::SparseVector;

/// `p_k = exp(z_k - max z) / sum_j exp(z_j - max z)`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Weights are stored row-major as `dims x classes`: the weight of feature
/// `d` for class `k` is at `d * classes + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    dims: usize,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dims: usize, classes: usize) -> Self {
        LinearModel {
            dims,
            classes,
            weights: vec![0.0; dims * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn from_parts(dims: usize, classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, TrainError> {
        if weights.len() != dims * classes || bias.len() != classes || classes == 0 {
            return Err(TrainError::ShapeMismatch);
        }
        Ok(LinearModel {
            dims,
            classes,
            weights,
            bias,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, feature: usize, class: usize) -> f64 {
        self.weights[feature * self.classes + class]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for &(d, v) in &x.entries {
            let row = &self.weights[d as usize * self.classes..][..self.classes];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += v * w;
            }
        }
        z
    }

    pub fn probabilities(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict_class(&self, x: &SparseVector) -> usize {
        argmax(&self.logits(x))
    }

    /// `self -= step * g`.
    pub fn apply(&mut self, g: &Gradient, step: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            *w -= step * gw;
        }
        for (b, gb) in self.bias.iter_mut().zip(&g.bias) {
            *b -= step * gb;
        }
    }

    fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// Same shape as the model it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.weights.iter().chain(&self.bias).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Inputs with their class indices (the positions of the one-hot ones).
#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a SparseVector>,
    pub labels: Vec<usize>,
}

/// Mean cross-entropy plus `(lambda / 2) * ||W||^2`, and its gradient.
/// The bias is not regularized.
pub fn loss_and_gradient(
    model: &LinearModel,
    batch: &Batch<'_>,
    l2_lambda: f64,
) -> Result<(f64, Gradient), TrainError> {
    if batch.inputs.len() != batch.labels.len() {
        return Err(TrainError::ShapeMismatch);
    }
    let k = model.classes;
    let mut g = Gradient {
        weights: model.weights.iter().map(|w| l2_lambda * w).collect(),
        bias: vec![0.0; k],
    };
    let n = batch.inputs.len();
    let mut data_loss = 0.0;
    if n > 0 {
        let inv_n = 1.0 / n as f64;
        for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
            if y >= k || x.dim != model.dims {
                return Err(TrainError::ShapeMismatch);
            }
            let mut residual = model.probabilities(x);
            data_loss -= residual[y].ln();
            residual[y] -= 1.0;
            for (gb, r) in g.bias.iter_mut().zip(&residual) {
                *gb += inv_n * r;
            }
            for &(d, v) in &x.entries {
                let row = &mut g.weights[d as usize * k..][..k];
                for (gw, r) in row.iter_mut().zip(&residual) {
                    *gw += inv_n * v * r;
                }
            }
        }
        data_loss *= inv_n;
    }
    let loss = data_loss + 0.5 * l2_lambda * model.squared_norm();
    Ok((loss, g))
}
