//! Dense feed-forward networks trained with seeded mini-batch gradient descent.
//!
//! Parameters are `f64`. Layer `i` holds a `fan_in × width` weight matrix and
//! a bias vector; inputs are batches of row vectors.

mod activation;
pub mod loss;
mod matrix;
mod network;
mod optimizer;
mod train;

pub use activation::Activation;
pub use loss::{binary_cross_entropy, loss_value, LossKind, PROB_EPS};
pub use matrix::{argmax, Matrix};
pub use network::{init_bound, ForwardTrace, Gradients, LayerSpec, Network, NetworkSpec};
pub use optimizer::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{train, EpochRecord, History, Metric, TrainOptions, TrainingSession};
