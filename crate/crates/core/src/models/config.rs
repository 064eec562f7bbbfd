use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetKind, Normalizer};
use crate::error::{Error, Result};
use crate::nn::{Activation, LossKind, OptimizerConfig};

/// Which pipeline produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Building one-hot | floor one-hot, sigmoid outputs, weighted BCE.
    Hierarchical,
    /// One softmax class per (building, floor) pair.
    Flattened,
    /// One softmax class per location id.
    FloorLevel,
}

impl ModelMode {
    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            ModelMode::Hierarchical | ModelMode::Flattened => DatasetKind::BuildingFloor,
            ModelMode::FloorLevel => DatasetKind::FloorLevel,
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            ModelMode::Hierarchical => LossKind::WeightedBce,
            _ => LossKind::CategoricalCe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Hierarchical => "hierarchical",
            ModelMode::Flattened => "flattened",
            ModelMode::FloorLevel => "floor_level",
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hierarchical" => Ok(ModelMode::Hierarchical),
            "flattened" => Ok(ModelMode::Flattened),
            "floor_level" => Ok(ModelMode::FloorLevel),
            other => Err(Error::config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    /// Encoder, bottleneck and decoder widths, e.g. `[64, 8, 64]`.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl SaeConfig {
    /// Index of the bottleneck layer.
    pub fn bottleneck_index(&self) -> usize {
        self.hidden_layers.len() / 2
    }

    pub fn bottleneck_width(&self) -> Option<usize> {
        self.hidden_layers.get(self.bottleneck_index()).copied()
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let h = &self.hidden_layers;
        if h.is_empty() || h.len() % 2 == 0 {
            return Err(Error::config(format!(
                "SAE layers {h:?} need an odd count around a single bottleneck"
            )));
        }
        if h.iter().ne(h.iter().rev()) {
            return Err(Error::config(format!("SAE layers {h:?} are not palindromic")));
        }
        let mid = self.bottleneck_index();
        if h[mid] == 0 || h[..mid].iter().any(|&w| w <= h[mid]) {
            return Err(Error::config(format!("SAE layers {h:?} must narrow to the bottleneck")));
        }
        if h[mid] >= input_dim {
            return Err(Error::config(format!(
                "bottleneck width {} must be below the input dimension {input_dim}",
                h[mid]
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("SAE batch size must be at least 1"));
        }
        if self.activation == Activation::Softmax {
            return Err(Error::config("softmax is not a hidden-layer activation"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub building: f64,
    pub floor: f64,
}

impl ClassWeights {
    pub fn new(building: f64, floor: f64) -> Self {
        Self { building, floor }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}

impl FromStr for ClassWeights {
    type Err = Error;

    /// Parses `"10:1"`.
    fn from_str(s: &str) -> Result<Self> {
        let (b, f) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("class weights '{s}' are not BUILDING:FLOOR")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x > 0.0)
                .ok_or_else(|| Error::config(format!("class weight '{v}' must be a positive number")))
        };
        Ok(Self::new(parse(b)?, parse(f)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Hidden widths between the bottleneck and the output layer.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    /// Applied to the bottleneck and to every hidden layer.
    pub dropout_rate: f64,
    pub optimizer: OptimizerConfig,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Used in hierarchical mode only.
    pub class_weights: ClassWeights,
    /// Keep the pretrained encoder fixed instead of fine-tuning it.
    #[serde(default)]
    pub freeze_encoder: bool,
}

impl ClassifierConfig {
    pub fn validate(&self, mode: ModelMode) -> Result<()> {
        if self.loss != mode.loss() {
            return Err(Error::config(format!(
                "{mode} models train with {:?} loss, not {:?}",
                mode.loss(),
                self.loss
            )));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("classifier hidden layers need nonzero widths"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("classifier batch size must be at least 1"));
        }
        if self.activation == Activation::Softmax {
            return Err(Error::config("softmax is not a hidden-layer activation"));
        }
        let w = self.class_weights;
        if !(w.building > 0.0 && w.floor > 0.0 && w.building.is_finite() && w.floor.is_finite()) {
            return Err(Error::config("class weights must be positive and finite"));
        }
        self.optimizer.validate()
    }
}

/// Everything one training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train_ratio: f64,
    /// Seeds initialization, shuffling and dropout.
    pub seed: u64,
    /// Seeds the train/validation split.
    pub split_seed: u64,
    pub normalizer: Normalizer,
    pub sae: SaeConfig,
    pub classifier: ClassifierConfig,
}

impl PipelineConfig {
    /// Building/floor setup: split 0.70, 20 epochs, batch 10, SAE 64-8-64
    /// ReLU with ADAM and MSE, no classifier hidden layers, dropout 0.2,
    /// ADAM, class weights 10:1.
    pub fn hierarchical(seed: u64) -> Self {
        Self {
            train_ratio: 0.70,
            seed,
            split_seed: seed,
            normalizer: Normalizer::default(),
            sae: SaeConfig {
                hidden_layers: vec![64, 8, 64],
                activation: Activation::Relu,
                epochs: 20,
                batch_size: 10,
                optimizer: OptimizerConfig::adam(),
            },
            classifier: ClassifierConfig {
                hidden_layers: Vec::new(),
                activation: Activation::Relu,
                dropout_rate: 0.2,
                optimizer: OptimizerConfig::adam(),
                loss: LossKind::WeightedBce,
                epochs: 20,
                batch_size: 10,
                class_weights: ClassWeights::new(10.0, 1.0),
                freeze_encoder: false,
            },
        }
    }

    /// The building/floor setup with a softmax over flattened classes.
    pub fn flattened(seed: u64) -> Self {
        let mut cfg = Self::hierarchical(seed);
        cfg.classifier.loss = LossKind::CategoricalCe;
        cfg.classifier.class_weights = ClassWeights::default();
        cfg
    }

    /// Location setup: split 0.75, batch 10, SAE 128-64-32-64-128 TanH
    /// with ADAM and MSE, classifier 64-32 ReLU with AdaGrad, dropout 0.5,
    /// 30 classifier epochs.
    pub fn floor_level(seed: u64) -> Self {
        Self {
            train_ratio: 0.75,
            seed,
            split_seed: seed,
            normalizer: Normalizer::default(),
            sae: SaeConfig {
                hidden_layers: vec![128, 64, 32, 64, 128],
                activation: Activation::Tanh,
                epochs: 20,
                batch_size: 10,
                optimizer: OptimizerConfig::adam(),
            },
            classifier: ClassifierConfig {
                hidden_layers: vec![64, 32],
                activation: Activation::Relu,
                dropout_rate: 0.5,
                optimizer: OptimizerConfig::adagrad(),
                loss: LossKind::CategoricalCe,
                epochs: 30,
                batch_size: 10,
                class_weights: ClassWeights::default(),
                freeze_encoder: false,
            },
        }
    }

    pub fn for_mode(mode: ModelMode, seed: u64) -> Self {
        match mode {
            ModelMode::Hierarchical => Self::hierarchical(seed),
            ModelMode::Flattened => Self::flattened(seed),
            ModelMode::FloorLevel => Self::floor_level(seed),
        }
    }

    /// Same configuration with both seeds set to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.split_seed = seed;
        self
    }

    pub fn validate(&self, mode: ModelMode, input_dim: usize) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::config(format!(
                "train ratio {} outside (0, 1)",
                self.train_ratio
            )));
        }
        self.normalizer.validate()?;
        self.sae.validate(input_dim)?;
        self.classifier.validate(mode)
    }
}

/// Decorrelated sub-seed for one stage of a run.
pub(crate) fn derive_seed(seed: u64, stage: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
