use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::argmax;
use super::{ForwardTrace, Gradients, Matrix, Network, Optimizer, OptimizerConfig};
use crate::error::{Error, Result};

/// How a predicted row is judged correct against its target row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Every output thresholded at 0.5 matches the target.
    Threshold,
    /// Argmax of the prediction equals argmax of the target.
    Argmax,
    /// Outputs split at `at`; both segments' argmaxes must match.
    ArgmaxSplit { at: usize },
}

impl Metric {
    pub fn row_correct(&self, predicted: &[f64], target: &[f64]) -> bool {
        match *self {
            Metric::Threshold => predicted.iter().zip(target).all(|(&p, &t)| (p >= 0.5) == (t >= 0.5)),
            Metric::Argmax => argmax(predicted) == argmax(target),
            Metric::ArgmaxSplit { at } => {
                let (pa, pb) = predicted.split_at(at);
                let (ta, tb) = target.split_at(at);
                argmax(pa) == argmax(ta) && argmax(pb) == argmax(tb)
            }
        }
    }

    /// Fraction of rows judged correct.
    pub fn accuracy(&self, predictions: &Matrix, targets: &Matrix) -> f64 {
        if predictions.rows() == 0 {
            return 0.0;
        }
        let correct = predictions
            .iter_rows()
            .zip(targets.iter_rows())
            .filter(|(p, t)| self.row_correct(p, t))
            .count();
        correct as f64 / predictions.rows() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds both the per-epoch shuffle and the dropout masks.
    pub seed: u64,
    pub metric: Metric,
    /// Leading layers excluded from updates.
    #[serde(default)]
    pub frozen_layers: usize,
}

/// One line of a training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// A network under training: owns the optimizer state, the dropout stream
/// and the trace of the most recent training-mode forward pass.
pub struct TrainingSession<'n> {
    net: &'n mut Network,
    optimizer: Optimizer,
    dropout_rng: ChaCha8Rng,
    trace: Option<ForwardTrace>,
}

impl<'n> TrainingSession<'n> {
    pub fn new(net: &'n mut Network, optimizer: Optimizer, dropout_seed: u64) -> Self {
        Self {
            net,
            optimizer,
            dropout_rng: ChaCha8Rng::seed_from_u64(dropout_seed),
            trace: None,
        }
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Training-mode forward pass; the trace is kept for [`Self::backward`].
    pub fn forward(&mut self, batch: &Matrix) -> Result<Matrix> {
        let trace = self.net.forward_train(batch, &mut self.dropout_rng)?;
        Ok(self.trace.insert(trace).output().clone())
    }

    /// Gradients for `batch`, which must be the batch of the preceding
    /// [`Self::forward`]. The recorded trace is consumed.
    pub fn backward(&mut self, batch: &Matrix, targets: &Matrix) -> Result<Gradients> {
        let trace = self
            .trace
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding training-mode forward pass".into()))?;
        if trace.input() != batch {
            return Err(Error::State(
                "backward batch differs from the one passed to forward".into(),
            ));
        }
        self.net.backward(&trace, targets)
    }

    pub fn step(&mut self, grads: &Gradients) -> Result<()> {
        self.optimizer.step(self.net, grads)
    }
}

fn dropout_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_4E5B
}

/// Seeded mini-batch training. Rows are reshuffled every epoch and the final
/// partial batch is kept. Validation data, when given, is scored in
/// inference mode after each epoch.
pub fn train(
    net: &mut Network,
    inputs: &Matrix,
    targets: &Matrix,
    optimizer: OptimizerConfig,
    options: &TrainOptions,
    validation: Option<(&Matrix, &Matrix)>,
) -> Result<History> {
    if inputs.rows() == 0 {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if inputs.rows() != targets.rows() {
        return Err(Error::shape(format!(
            "{} input rows but {} target rows",
            inputs.rows(),
            targets.rows()
        )));
    }
    if targets.cols() != net.output_dim() {
        return Err(Error::shape(format!(
            "targets have {} columns, network outputs {}",
            targets.cols(),
            net.output_dim()
        )));
    }
    if options.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut history = History::default();
    if options.epochs == 0 {
        return Ok(history);
    }

    let opt = Optimizer::new(optimizer, net)?.freeze_prefix(options.frozen_layers);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut session = TrainingSession::new(net, opt, dropout_seed(options.seed));
    let mut order: Vec<usize> = (0..inputs.rows()).collect();

    for epoch in 1..=options.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(options.batch_size) {
            let x = inputs.select_rows(chunk);
            let t = targets.select_rows(chunk);
            let out = session.forward(&x)?;
            loss_sum += session.network().loss(&out, &t)? * chunk.len() as f64;
            correct += out
                .iter_rows()
                .zip(t.iter_rows())
                .filter(|(p, t)| options.metric.row_correct(p, t))
                .count();
            let grads = session.backward(&x, &t)?;
            session.step(&grads)?;
        }
        let (val_loss, val_acc) = match validation {
            Some((vx, vt)) if vx.rows() > 0 => {
                let out = session.network().forward(vx)?;
                (
                    Some(session.network().loss(&out, vt)?),
                    Some(options.metric.accuracy(&out, vt)),
                )
            }
            _ => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / inputs.rows() as f64,
            train_acc: correct as f64 / inputs.rows() as f64,
            val_loss,
            val_acc,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec, LossKind, NetworkSpec};

    fn xor() -> (Matrix, Matrix) {
        (
            Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[0.0], [1.0], [1.0], [0.0]]).unwrap(),
        )
    }

    fn xor_net(seed: u64) -> Network {
        Network::new(NetworkSpec {
            input_dim: 2,
            layers: vec![
                LayerSpec::new(4, Activation::Sigmoid),
                LayerSpec::new(1, Activation::Sigmoid),
            ],
            loss: LossKind::Mse,
            output_weights: None,
            seed,
        })
        .unwrap()
    }

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: 4,
            seed: 3,
            metric: Metric::Threshold,
            frozen_layers: 0,
        }
    }

    #[test]
    fn learns_xor() {
        let (x, y) = xor();
        let mut net = xor_net(1);
        let adam = OptimizerConfig::adam().with_learning_rate(0.05);
        let history = train(&mut net, &x, &y, adam, &opts(2000), None).unwrap();
        assert_eq!(history.len(), 2000);
        let out = net.forward(&x).unwrap();
        assert_eq!(Metric::Threshold.accuracy(&out, &y), 1.0, "{out:?}");
    }

    #[test]
    fn zero_epochs_leave_network_untouched() {
        let (x, y) = xor();
        let mut net = xor_net(1);
        let before = net.clone();
        let history = train(&mut net, &x, &y, OptimizerConfig::adam(), &opts(0), None).unwrap();
        assert!(history.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = xor();
        let run = || {
            let mut net = xor_net(9);
            let h = train(&mut net, &x, &y, OptimizerConfig::adam(), &opts(25), Some((&x, &y))).unwrap();
            (net, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut net = xor_net(1);
        let err = train(
            &mut net,
            &Matrix::zeros(0, 2),
            &Matrix::zeros(0, 1),
            OptimizerConfig::adam(),
            &opts(1),
            None,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let (x, y) = xor();
        let mut net = xor_net(1);
        let opt = Optimizer::new(OptimizerConfig::adam(), &net).unwrap();
        let mut session = TrainingSession::new(&mut net, opt, 0);
        assert!(matches!(session.backward(&x, &y), Err(Error::State(_))));
        session.forward(&x).unwrap();
        session.backward(&x, &y).unwrap();
        // the trace is consumed by the first backward
        assert!(matches!(session.backward(&x, &y), Err(Error::State(_))));
        session.forward(&x).unwrap();
        let other = x.select_rows(&[0, 1]);
        assert!(matches!(session.backward(&other, &y), Err(Error::State(_))));
    }

    #[test]
    fn final_partial_batch_is_trained_on() {
        // 5 rows with batch 2 → three optimizer steps per epoch.
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        let y = x.clone();
        let mut net = Network::new(NetworkSpec {
            input_dim: 1,
            layers: vec![LayerSpec::new(1, Activation::Identity)],
            loss: LossKind::Mse,
            output_weights: None,
            seed: 0,
        })
        .unwrap();
        let before = net.clone();
        let mut o = opts(1);
        o.batch_size = 2;
        // Replicate by hand with the same shuffle to count steps.
        let mut order: Vec<usize> = (0..5).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(o.seed));
        let mut manual = before.clone();
        let mut opt = Optimizer::new(OptimizerConfig::adam(), &manual).unwrap();
        for chunk in order.chunks(2) {
            let g = manual.gradients(&x.select_rows(chunk), &y.select_rows(chunk)).unwrap();
            opt.step(&mut manual, &g).unwrap();
        }
        assert_eq!(opt.steps_taken(), 3);
        train(&mut net, &x, &y, OptimizerConfig::adam(), &o, None).unwrap();
        assert_eq!(net, manual);
    }

    #[test]
    fn split_metric_requires_both_segments() {
        let m = Metric::ArgmaxSplit { at: 2 };
        assert!(m.row_correct(&[0.1, 0.9, 0.8, 0.1, 0.1], &[0.0, 1.0, 1.0, 0.0, 0.0]));
        assert!(!m.row_correct(&[0.1, 0.9, 0.1, 0.8, 0.1], &[0.0, 1.0, 1.0, 0.0, 0.0]));
    }
}
