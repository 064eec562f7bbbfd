use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{self, LossKind};
use super::{Activation, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    /// Inverted-dropout rate applied to this layer's output in training mode.
    #[serde(default)]
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self {
            width,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    /// Per-output-unit weights; present exactly when `loss` is weighted BCE.
    #[serde(default)]
    pub output_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input dimension must be at least 1"));
        }
        if self.layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.width == 0 {
                return Err(Error::config(format!("layer {i} has zero width")));
            }
            if layer.activation == Activation::Softmax && i != last {
                return Err(Error::config(format!(
                    "softmax is only allowed on the final layer (found on layer {i})"
                )));
            }
            if !(0.0..1.0).contains(&layer.dropout_rate) {
                return Err(Error::config(format!(
                    "layer {i} dropout rate {} outside [0, 1)",
                    layer.dropout_rate
                )));
            }
        }
        if self.layers[last].dropout_rate > 0.0 {
            return Err(Error::config("dropout on the output layer is not supported"));
        }
        match (&self.output_weights, self.loss) {
            (Some(w), LossKind::WeightedBce) => {
                if w.len() != self.layers[last].width {
                    return Err(Error::config(format!(
                        "{} output weights for an output layer of width {}",
                        w.len(),
                        self.layers[last].width
                    )));
                }
                if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::config("output weights must be positive and finite"));
                }
            }
            (None, LossKind::WeightedBce) => return Err(Error::config("weighted BCE requires output weights")),
            (Some(_), _) => return Err(Error::config("output weights are only used with weighted BCE")),
            (None, _) => {}
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    /// Fan-in of layer `i`.
    fn fan_in(&self, i: usize) -> usize {
        if i == 0 {
            self.input_dim
        } else {
            self.layers[i - 1].width
        }
    }
}

/// `sqrt(6 / (fan_in + fan_out))`, the scaled-uniform initialization bound.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A dense feed-forward network. Immutable during inference; training
/// mutates it only through [`super::Optimizer::step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkParts")]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct NetworkParts {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<NetworkParts> for Network {
    type Error = Error;

    fn try_from(p: NetworkParts) -> Result<Self> {
        Network::from_parts(p.spec, p.weights, p.biases)
    }
}

/// Per-layer gradients, same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.as_slice().iter())
            .chain(self.biases.iter().flatten())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Everything a training-mode forward pass records for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Matrix,
    /// Activation outputs before dropout, one per layer.
    outputs: Vec<Matrix>,
    /// Scaled keep-masks (0 or 1/(1-rate)) and the masked outputs, for
    /// layers with dropout.
    dropped: Vec<Option<(Vec<f64>, Matrix)>>,
}

impl ForwardTrace {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace of a non-empty network")
    }

    fn layer_input(&self, layer: usize) -> &Matrix {
        if layer == 0 {
            return &self.input;
        }
        match &self.dropped[layer - 1] {
            Some((_, masked)) => masked,
            None => &self.outputs[layer - 1],
        }
    }
}

impl Network {
    /// Builds a network with seeded scaled-uniform weights and zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut weights = Vec::with_capacity(spec.layers.len());
        let mut biases = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let fan_in = spec.fan_in(i);
            let bound = init_bound(fan_in, layer.width);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let data = (0..fan_in * layer.width).map(|_| dist.sample(&mut rng)).collect();
            weights.push(Matrix::from_vec(fan_in, layer.width, data)?);
            biases.push(vec![0.0; layer.width]);
        }
        Ok(Self { spec, weights, biases })
    }

    /// Assembles a network from explicit parameters, checking every shape.
    pub fn from_parts(spec: NetworkSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.layers.len() || biases.len() != spec.layers.len() {
            return Err(Error::shape(format!(
                "{} weight matrices and {} bias vectors for {} layers",
                weights.len(),
                biases.len(),
                spec.layers.len()
            )));
        }
        for (i, layer) in spec.layers.iter().enumerate() {
            let expected = (spec.fan_in(i), layer.width);
            if weights[i].shape() != expected {
                return Err(Error::shape(format!(
                    "layer {i} weights are {:?}, expected {expected:?}",
                    weights[i].shape()
                )));
            }
            if biases[i].len() != layer.width {
                return Err(Error::shape(format!(
                    "layer {i} has {} biases, expected {}",
                    biases[i].len(),
                    layer.width
                )));
            }
            if !weights[i].is_finite() || biases[i].iter().any(|b| !b.is_finite()) {
                return Err(Error::shape(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix], &mut [Vec<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn layer_count(&self) -> usize {
        self.spec.layers.len()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.spec.input_dim
            )));
        }
        if !batch.is_finite() {
            return Err(Error::shape("batch contains non-finite values"));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &Matrix) -> Matrix {
        let mut z = input
            .matmul(&self.weights[layer])
            .expect("shapes validated at construction");
        z.add_row_vector(&self.biases[layer]);
        self.spec.layers[layer].activation.apply(&mut z);
        z
    }

    /// Inference-mode forward pass: no dropout masks and no scaling.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_prefix(batch, self.layer_count())
    }

    /// Activations after the first `layers` layers (inference mode).
    pub fn forward_prefix(&self, batch: &Matrix, layers: usize) -> Result<Matrix> {
        self.check_input(batch)?;
        if layers == 0 || layers > self.layer_count() {
            return Err(Error::shape(format!(
                "layer prefix {layers} outside 1..={}",
                self.layer_count()
            )));
        }
        let mut act = self.affine(0, batch);
        for layer in 1..layers {
            act = self.affine(layer, &act);
        }
        Ok(act)
    }

    /// Training-mode forward pass. Layers with a positive dropout rate get a
    /// fresh inverted-dropout mask drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(&self, batch: &Matrix, rng: &mut R) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let n = self.layer_count();
        let mut trace = ForwardTrace {
            input: batch.clone(),
            outputs: Vec::with_capacity(n),
            dropped: Vec::with_capacity(n),
        };
        for (layer, spec) in self.spec.layers.iter().enumerate() {
            let out = self.affine(layer, trace.layer_input(layer));
            let dropped = if spec.dropout_rate > 0.0 {
                let keep_scale = 1.0 / (1.0 - spec.dropout_rate);
                let mask: Vec<f64> = (0..out.as_slice().len())
                    .map(|_| {
                        if rng.random::<f64>() < spec.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                let mut masked = out.clone();
                for (v, m) in masked.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Some((mask, masked))
            } else {
                None
            };
            trace.outputs.push(out);
            trace.dropped.push(dropped);
        }
        Ok(trace)
    }

    /// Loss of `predictions` against `targets` under this network's loss kind.
    pub fn loss(&self, predictions: &Matrix, targets: &Matrix) -> Result<f64> {
        loss::loss_value(
            self.spec.loss,
            self.spec.output_weights.as_deref(),
            predictions,
            targets,
        )
    }

    /// Backpropagates through a recorded forward pass, reusing its dropout masks.
    pub fn backward(&self, trace: &ForwardTrace, targets: &Matrix) -> Result<Gradients> {
        if trace.outputs.len() != self.layer_count() || trace.input.cols() != self.input_dim() {
            return Err(Error::State("trace does not belong to this network".into()));
        }
        let last = self.layer_count() - 1;
        let mut delta = loss::output_delta(
            self.spec.loss,
            self.spec.layers[last].activation,
            self.spec.output_weights.as_deref(),
            trace.output(),
            targets,
        )?;

        let mut grad_w: Vec<Matrix> = self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let mut grad_b: Vec<Vec<f64>> = Vec::with_capacity(self.layer_count());

        for layer in (0..=last).rev() {
            trace.layer_input(layer).tmatmul_into(&delta, &mut grad_w[layer]);
            grad_b.push(delta.column_sums());
            if layer == 0 {
                break;
            }
            let mut upstream = delta.matmul_t(&self.weights[layer]);
            if let Some((mask, _)) = &trace.dropped[layer - 1] {
                for (g, m) in upstream.as_mut_slice().iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            self.spec.layers[layer - 1]
                .activation
                .backprop(&trace.outputs[layer - 1], &mut upstream);
            delta = upstream;
        }
        grad_b.reverse();
        Ok(Gradients {
            weights: grad_w,
            biases: grad_b,
        })
    }

    /// Loss gradients on `batch` without dropout (deterministic).
    pub fn gradients(&self, batch: &Matrix, targets: &Matrix) -> Result<Gradients> {
        // No layer draws from the rng once dropout is off.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let mut undropped = self.clone();
        for layer in &mut undropped.spec.layers {
            layer.dropout_rate = 0.0;
        }
        let trace = undropped.forward_train(batch, &mut unused)?;
        undropped.backward(&trace, targets)
    }

    /// The first `layers` layers as a standalone network with MSE loss.
    pub fn truncated(&self, layers: usize) -> Result<Network> {
        if layers == 0 || layers > self.layer_count() {
            return Err(Error::config(format!(
                "cannot keep {layers} of {} layers",
                self.layer_count()
            )));
        }
        let mut spec = NetworkSpec {
            input_dim: self.spec.input_dim,
            layers: self.spec.layers[..layers].to_vec(),
            loss: LossKind::Mse,
            output_weights: None,
            seed: self.spec.seed,
        };
        if let Some(l) = spec.layers.last_mut() {
            l.dropout_rate = 0.0;
        }
        Network::from_parts(spec, self.weights[..layers].to_vec(), self.biases[..layers].to_vec())
    }

    /// Overwrites the first layers with those of `prefix`, which must share
    /// the same input dimension and leading layer widths.
    pub fn load_prefix(&mut self, prefix: &Network) -> Result<()> {
        if prefix.input_dim() != self.input_dim() || prefix.layer_count() > self.layer_count() {
            return Err(Error::config("prefix network does not fit"));
        }
        for i in 0..prefix.layer_count() {
            if prefix.weights[i].shape() != self.weights[i].shape() {
                return Err(Error::config(format!(
                    "prefix layer {i} is {:?}, target layer is {:?}",
                    prefix.weights[i].shape(),
                    self.weights[i].shape()
                )));
            }
            self.weights[i] = prefix.weights[i].clone();
            self.biases[i] = prefix.biases[i].clone();
        }
        Ok(())
    }

    /// Sets a single parameter; `bias` selects the bias vector of `layer`.
    /// Intended for finite-difference checks.
    pub fn perturb(&mut self, layer: usize, index: usize, bias: bool, delta: f64) {
        if bias {
            self.biases[layer][index] += delta;
        } else {
            self.weights[layer].as_mut_slice()[index] += delta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(input: usize, layers: &[(usize, Activation)], loss: LossKind) -> NetworkSpec {
        NetworkSpec {
            input_dim: input,
            layers: layers.iter().map(|&(w, a)| LayerSpec::new(w, a)).collect(),
            loss,
            output_weights: None,
            seed: 42,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let s = spec(520, &[(64, Activation::Relu), (8, Activation::Sigmoid)], LossKind::Mse);
        let a = Network::new(s.clone()).unwrap();
        let b = Network::new(s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights()[0].shape(), (520, 64));
        assert_eq!(a.weights()[1].shape(), (64, 8));
        let b0 = init_bound(520, 64);
        let b1 = init_bound(64, 8);
        assert!(a.weights()[0].as_slice().iter().all(|w| w.abs() <= b0));
        assert!(a.weights()[1].as_slice().iter().all(|w| w.abs() <= b1));
        assert!(a.biases().iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let mut s = spec(4, &[], LossKind::Mse);
        assert!(matches!(Network::new(s.clone()), Err(Error::Config(_))));
        s.layers = vec![
            LayerSpec::new(3, Activation::Softmax),
            LayerSpec::new(2, Activation::Sigmoid),
        ];
        assert!(matches!(Network::new(s.clone()), Err(Error::Config(_))));
        s.layers = vec![LayerSpec::new(2, Activation::Sigmoid)];
        s.loss = LossKind::WeightedBce;
        assert!(matches!(Network::new(s.clone()), Err(Error::Config(_))));
        s.output_weights = Some(vec![1.0, 1.0, 1.0]);
        assert!(matches!(Network::new(s.clone()), Err(Error::Config(_))));
        s.output_weights = Some(vec![1.0, 0.0]);
        assert!(matches!(Network::new(s.clone()), Err(Error::Config(_))));
        s.output_weights = Some(vec![1.0, 2.0]);
        assert!(Network::new(s).is_ok());
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let s = spec(3, &[(3, Activation::Identity)], LossKind::Mse);
        let net = Network::from_parts(s, vec![Matrix::identity(3)], vec![vec![0.0; 3]]).unwrap();
        let x = Matrix::from_rows(&[[0.5, -2.0, 7.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let s = spec(4, &[(3, Activation::Sigmoid)], LossKind::Mse);
        let net = Network::from_parts(s, vec![Matrix::zeros(4, 3)], vec![vec![0.0; 3]]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -5.0, 3.0, 100.0]]).unwrap();
        assert!(net.forward(&x).unwrap().as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::new(spec(4, &[(2, Activation::Tanh)], LossKind::Mse)).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_error_mse_has_zero_gradients() {
        let net = Network::new(spec(
            3,
            &[(4, Activation::Tanh), (2, Activation::Sigmoid)],
            LossKind::Mse,
        ))
        .unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.9, 0.0, 0.4]]).unwrap();
        let y = net.forward(&x).unwrap();
        let g = net.gradients(&x, &y).unwrap();
        assert!(g.max_abs() <= 1e-12);
    }

    #[test]
    fn doubling_class_weights_doubles_gradients() {
        let mut s = spec(
            3,
            &[(4, Activation::Relu), (3, Activation::Sigmoid)],
            LossKind::WeightedBce,
        );
        s.output_weights = Some(vec![1.0, 2.5, 0.7]);
        let net = Network::new(s.clone()).unwrap();
        s.output_weights = Some(vec![2.0, 5.0, 1.4]);
        let doubled = Network::from_parts(s, net.weights().to_vec(), net.biases().to_vec()).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.8, 0.3], [0.6, 0.2, 0.9]]).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]).unwrap();
        let g1 = net.gradients(&x, &t).unwrap();
        let g2 = doubled.gradients(&x, &t).unwrap();
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((2.0 * x - y).abs() <= 1e-15 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn truncated_network_equals_prefix_activations() {
        let net = Network::new(spec(
            5,
            &[(4, Activation::Relu), (2, Activation::Relu), (5, Activation::Sigmoid)],
            LossKind::Mse,
        ))
        .unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4, 0.5]]).unwrap();
        let enc = net.truncated(2).unwrap();
        assert_eq!(enc.forward(&x).unwrap(), net.forward_prefix(&x, 2).unwrap());
    }
}
