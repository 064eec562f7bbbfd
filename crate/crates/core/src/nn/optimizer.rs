use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Gradients, Matrix, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdaGrad,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdaGrad => "adagrad",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "adagrad" => Ok(OptimizerKind::AdaGrad),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    /// lr 0.001, β1 0.9, β2 0.999, ε 1e-8.
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// lr 0.01, ε 1e-8.
    pub fn adagrad() -> Self {
        Self {
            kind: OptimizerKind::AdaGrad,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn default_for(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(),
            OptimizerKind::AdaGrad => Self::adagrad(),
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if self.kind == OptimizerKind::Adam && !(open_unit(self.beta1) && open_unit(self.beta2)) {
            return Err(Error::config("ADAM betas must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Optimizer configuration plus its per-parameter accumulators.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    /// ADAM first moments; unused by AdaGrad.
    first: Vec<(Matrix, Vec<f64>)>,
    /// ADAM second moments, or AdaGrad squared-gradient sums.
    second: Vec<(Matrix, Vec<f64>)>,
    /// Number of leading layers left untouched.
    frozen: usize,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, net: &Network) -> Result<Self> {
        config.validate()?;
        let zeros = || -> Vec<(Matrix, Vec<f64>)> {
            net.weights()
                .iter()
                .zip(net.biases())
                .map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), vec![0.0; b.len()]))
                .collect()
        };
        Ok(Self {
            config,
            step: 0,
            first: if config.kind == OptimizerKind::Adam {
                zeros()
            } else {
                Vec::new()
            },
            second: zeros(),
            frozen: 0,
        })
    }

    /// Leaves the first `layers` layers unchanged by [`Optimizer::step`].
    pub fn freeze_prefix(mut self, layers: usize) -> Self {
        self.frozen = layers;
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Squared-gradient accumulators (AdaGrad) or second moments (ADAM).
    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.second
            .iter()
            .flat_map(|(w, b)| w.as_slice().iter().chain(b.iter()).copied())
    }

    fn check(&self, net: &Network, grads: &Gradients) -> Result<()> {
        let layers = self.second.len();
        if net.layer_count() != layers || grads.weights.len() != layers || grads.biases.len() != layers {
            return Err(Error::shape(
                "optimizer state, network and gradients disagree on layer count",
            ));
        }
        for (i, ((acc, _), (w, b))) in self
            .second
            .iter()
            .zip(net.weights().iter().zip(net.biases()))
            .enumerate()
        {
            if acc.shape() != w.shape() || grads.weights[i].shape() != w.shape() || grads.biases[i].len() != b.len() {
                return Err(Error::shape(format!("layer {i} gradient/accumulator shape mismatch")));
            }
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        self.check(net, grads)?;
        self.step += 1;
        let cfg = self.config;
        let (weights, biases) = net.params_mut();
        match cfg.kind {
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let correction1 = 1.0 - cfg.beta1.powi(t);
                let correction2 = 1.0 - cfg.beta2.powi(t);
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        let m_hat = *m / correction1;
                        let v_hat = *v / correction2;
                        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                };
                for layer in self.frozen..weights.len() {
                    let (mw, mb) = &mut self.first[layer];
                    let (vw, vb) = &mut self.second[layer];
                    update(
                        weights[layer].as_mut_slice(),
                        grads.weights[layer].as_slice(),
                        mw.as_mut_slice(),
                        vw.as_mut_slice(),
                    );
                    update(&mut biases[layer], &grads.biases[layer], mb, vb);
                }
            }
            OptimizerKind::AdaGrad => {
                let update = |p: &mut [f64], g: &[f64], acc: &mut [f64]| {
                    for ((p, &g), acc) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                        *acc += g * g;
                        *p -= cfg.learning_rate * g / (acc.sqrt() + cfg.epsilon);
                    }
                };
                for layer in self.frozen..weights.len() {
                    let (aw, ab) = &mut self.second[layer];
                    update(
                        weights[layer].as_mut_slice(),
                        grads.weights[layer].as_slice(),
                        aw.as_mut_slice(),
                    );
                    update(&mut biases[layer], &grads.biases[layer], ab);
                }
            }
        }
        Ok(())
    }
}
