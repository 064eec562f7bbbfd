use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Activation, Matrix};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over all entries of the squared error.
    Mse,
    /// Per-output-unit weighted binary cross-entropy, summed over outputs and
    /// averaged over the batch.
    WeightedBce,
    /// Categorical cross-entropy averaged over the batch.
    CategoricalCe,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::WeightedBce => "weighted_bce",
            LossKind::CategoricalCe => "categorical_ce",
        })
    }
}

#[inline]
fn clip(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_shapes(predictions: &Matrix, targets: &Matrix) -> Result<()> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    if predictions.rows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Evaluates `kind` on a batch. `weights` is required for
/// [`LossKind::WeightedBce`] and ignored otherwise.
pub fn loss_value(kind: LossKind, weights: Option<&[f64]>, predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    check_shapes(predictions, targets)?;
    let batch = predictions.rows() as f64;
    let p = predictions.as_slice();
    let t = targets.as_slice();
    let value = match kind {
        LossKind::Mse => {
            let sum: f64 = p.iter().zip(t).map(|(p, t)| (p - t) * (p - t)).sum();
            sum / p.len() as f64
        }
        LossKind::WeightedBce => {
            let w = weights.ok_or_else(|| Error::config("weighted BCE needs output weights"))?;
            if w.len() != predictions.cols() {
                return Err(Error::shape(format!(
                    "{} output weights for {} outputs",
                    w.len(),
                    predictions.cols()
                )));
            }
            let mut sum = 0.0;
            for (pr, tr) in predictions.iter_rows().zip(targets.iter_rows()) {
                for ((&p, &t), &wj) in pr.iter().zip(tr).zip(w) {
                    sum += wj * bce_term(p, t);
                }
            }
            sum / batch
        }
        LossKind::CategoricalCe => {
            let sum: f64 = p.iter().zip(t).map(|(&p, &t)| -t * clip(p).ln()).sum();
            sum / batch
        }
    };
    Ok(value)
}

#[inline]
fn bce_term(p: f64, t: f64) -> f64 {
    let p = clip(p);
    -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
}

/// Unweighted binary cross-entropy (sum over outputs, mean over batch).
pub fn binary_cross_entropy(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    check_shapes(predictions, targets)?;
    let sum: f64 = predictions
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(&p, &t)| bce_term(p, t))
        .sum();
    Ok(sum / predictions.rows() as f64)
}

/// Gradient of the loss with respect to the output layer's pre-activations.
///
/// Sigmoid + weighted BCE and Softmax + categorical CE use the closed forms
/// `w ⊙ (p − t)` and `p·Σt − t`; any other pairing chains dL/dp through the
/// activation derivative.
pub(crate) fn output_delta(
    kind: LossKind,
    activation: Activation,
    weights: Option<&[f64]>,
    outputs: &Matrix,
    targets: &Matrix,
) -> Result<Matrix> {
    check_shapes(outputs, targets)?;
    let batch = outputs.rows() as f64;
    let cols = outputs.cols();
    let mut delta = Matrix::zeros(outputs.rows(), cols);
    let weight = |j: usize| weights.map_or(1.0, |w| w[j]);
    if kind == LossKind::WeightedBce {
        let w = weights.ok_or_else(|| Error::config("weighted BCE needs output weights"))?;
        if w.len() != cols {
            return Err(Error::shape("output weight count differs from output width"));
        }
    }

    match (kind, activation) {
        (LossKind::WeightedBce, Activation::Sigmoid) => {
            for r in 0..outputs.rows() {
                let (p, t) = (outputs.row(r), targets.row(r));
                for (j, d) in delta.row_mut(r).iter_mut().enumerate() {
                    *d = weight(j) * (p[j] - t[j]) / batch;
                }
            }
        }
        (LossKind::CategoricalCe, Activation::Softmax) => {
            for r in 0..outputs.rows() {
                let (p, t) = (outputs.row(r), targets.row(r));
                let t_sum: f64 = t.iter().sum();
                for (j, d) in delta.row_mut(r).iter_mut().enumerate() {
                    *d = (p[j] * t_sum - t[j]) / batch;
                }
            }
        }
        _ => {
            let n = outputs.as_slice().len() as f64;
            for r in 0..outputs.rows() {
                let (p, t) = (outputs.row(r), targets.row(r));
                for (j, d) in delta.row_mut(r).iter_mut().enumerate() {
                    *d = match kind {
                        LossKind::Mse => 2.0 * (p[j] - t[j]) / n,
                        LossKind::WeightedBce => {
                            let pc = clip(p[j]);
                            weight(j) * (-t[j] / pc + (1.0 - t[j]) / (1.0 - pc)) / batch
                        }
                        LossKind::CategoricalCe => -t[j] / clip(p[j]) / batch,
                    };
                }
            }
            activation.backprop(outputs, &mut delta);
        }
    }
    Ok(delta)
}
