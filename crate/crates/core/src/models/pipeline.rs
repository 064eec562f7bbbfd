use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ClassifierConfig, ModelMode, PipelineConfig, SaeConfig};
use crate::data::{split_indices, Dataset, FingerprintRecord, Label, LabelCodec, Normalizer};
use crate::error::{Error, Result};
use crate::nn::{train, Activation, History, LayerSpec, LossKind, Matrix, Metric, Network, NetworkSpec, TrainOptions};

const STAGE_SAE_INIT: u64 = 1;
const STAGE_SAE_TRAIN: u64 = 2;
const STAGE_CLS_INIT: u64 = 3;
const STAGE_CLS_TRAIN: u64 = 4;

/// A trained autoencoder and its extracted encoder.
#[derive(Debug, Clone)]
pub struct PretrainedSae {
    pub autoencoder: Network,
    /// Layers up to and including the bottleneck.
    pub encoder: Network,
    pub history: History,
}

/// Trains an autoencoder on `features` (x -> x, MSE) and keeps its encoder.
///
/// Hidden layers use `cfg.activation`; the reconstruction layer is sigmoid
/// because the features lie in `[0, 1]`.
pub fn pretrain_sae(features: &Matrix, cfg: &SaeConfig, seed: u64) -> Result<PretrainedSae> {
    cfg.validate(features.cols())?;
    let mut layers: Vec<LayerSpec> = cfg
        .hidden_layers
        .iter()
        .map(|&w| LayerSpec::new(w, cfg.activation))
        .collect();
    layers.push(LayerSpec::new(features.cols(), Activation::Sigmoid));
    let mut autoencoder = Network::new(NetworkSpec {
        input_dim: features.cols(),
        layers,
        loss: LossKind::Mse,
        output_weights: None,
        seed: derive_seed(seed, STAGE_SAE_INIT),
    })?;
    let options = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: derive_seed(seed, STAGE_SAE_TRAIN),
        metric: Metric::Threshold,
        frozen_layers: 0,
    };
    let history = train(&mut autoencoder, features, features, cfg.optimizer, &options, None)?;
    let encoder = autoencoder.truncated(cfg.bottleneck_index() + 1)?;
    Ok(PretrainedSae {
        autoencoder,
        encoder,
        history,
    })
}

/// Output weights for a hierarchical codec: the building weight on every
/// building unit and the floor weight on every floor unit.
pub fn hierarchical_output_weights(codec: &LabelCodec, cls: &ClassifierConfig) -> Result<Vec<f64>> {
    let LabelCodec::Hierarchical {
        building_count,
        max_floor_count,
    } = *codec
    else {
        return Err(Error::config("output weights need a hierarchical codec"));
    };
    let mut w = vec![cls.class_weights.building; building_count];
    w.extend(std::iter::repeat(cls.class_weights.floor).take(max_floor_count));
    Ok(w)
}

/// Encoder layers followed by the classifier's hidden and output layers,
/// with the encoder's parameters copied in.
pub fn build_stacked(encoder: &Network, cls: &ClassifierConfig, codec: &LabelCodec, seed: u64) -> Result<Network> {
    let hierarchical = matches!(codec, LabelCodec::Hierarchical { .. });
    let expected_loss = if hierarchical {
        LossKind::WeightedBce
    } else {
        LossKind::CategoricalCe
    };
    if cls.loss != expected_loss {
        return Err(Error::config(format!(
            "{} codec needs {expected_loss:?} loss, got {:?}",
            codec.mode_name(),
            cls.loss
        )));
    }
    let mut layers = encoder.spec().layers.clone();
    for l in layers.iter_mut() {
        l.dropout_rate = 0.0;
    }
    if let Some(bottleneck) = layers.last_mut() {
        bottleneck.dropout_rate = cls.dropout_rate;
    }
    layers.extend(
        cls.hidden_layers
            .iter()
            .map(|&w| LayerSpec::new(w, cls.activation).with_dropout(cls.dropout_rate)),
    );
    let output = if hierarchical {
        Activation::Sigmoid
    } else {
        Activation::Softmax
    };
    layers.push(LayerSpec::new(codec.dim(), output));
    let mut net = Network::new(NetworkSpec {
        input_dim: encoder.input_dim(),
        layers,
        loss: cls.loss,
        output_weights: if hierarchical {
            Some(hierarchical_output_weights(codec, cls)?)
        } else {
            None
        },
        seed,
    })?;
    net.load_prefix(encoder)?;
    Ok(net)
}

/// Deployable result of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub mode: ModelMode,
    pub normalizer: Normalizer,
    pub ap_order: Vec<String>,
    pub codec: LabelCodec,
    pub network: Network,
    /// Settings the model was trained with.
    pub config: PipelineConfig,
    pub sae_history: History,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Raw output activations in codec output order.
    pub scores: Vec<f64>,
}

impl TrainedModel {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.network.input_dim() != self.ap_order.len() {
            return Err(Error::shape(format!(
                "network takes {} inputs but the model lists {} APs",
                self.network.input_dim(),
                self.ap_order.len()
            )));
        }
        if self.network.output_dim() != self.codec.dim() {
            return Err(Error::shape(format!(
                "network has {} outputs but the codec expects {}",
                self.network.output_dim(),
                self.codec.dim()
            )));
        }
        self.normalizer.validate()
    }

    pub fn predict(&self, scan: &FingerprintRecord) -> Result<Prediction> {
        Ok(self
            .predict_records(std::slice::from_ref(scan))?
            .pop()
            .expect("one record in, one prediction out"))
    }

    pub fn predict_records(&self, scans: &[FingerprintRecord]) -> Result<Vec<Prediction>> {
        for (i, s) in scans.iter().enumerate() {
            if s.rss.len() != self.ap_order.len() {
                return Err(Error::shape(format!(
                    "scan {i} has {} readings, model expects {}",
                    s.rss.len(),
                    self.ap_order.len()
                )));
            }
        }
        if scans.is_empty() {
            return Ok(Vec::new());
        }
        self.predict_features(&self.normalizer.normalize_records(scans)?)
    }

    /// Predictions for already-normalized feature rows.
    pub fn predict_features(&self, features: &Matrix) -> Result<Vec<Prediction>> {
        let out = self.network.forward(features)?;
        out.iter_rows()
            .map(|row| {
                Ok(Prediction {
                    label: self.codec.decode(row)?,
                    scores: row.to_vec(),
                })
            })
            .collect()
    }

    /// Predictions for a dataset sharing the model's AP order.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        if dataset.ap_order() != self.ap_order.as_slice() {
            return Err(Error::shape(
                "dataset AP order differs from the model's; align it first",
            ));
        }
        if dataset.is_empty() {
            return Ok(Vec::new());
        }
        self.predict_features(&self.normalizer.normalize(dataset)?)
    }
}

fn fit_codec(mode: ModelMode, dataset: &Dataset) -> Result<LabelCodec> {
    if dataset.kind() != mode.dataset_kind() {
        return Err(Error::config(format!(
            "{mode} training needs a {:?} dataset, got {:?}",
            mode.dataset_kind(),
            dataset.kind()
        )));
    }
    match mode {
        ModelMode::Hierarchical => LabelCodec::fit_hierarchical(dataset),
        ModelMode::Flattened => LabelCodec::fit_flattened(dataset),
        ModelMode::FloorLevel => LabelCodec::fit_categorical(dataset),
    }
}

/// The training and validation parts a run with `cfg` uses.
pub fn validation_split(dataset: &Dataset, cfg: &PipelineConfig) -> Result<(Dataset, Dataset)> {
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.train_ratio, cfg.split_seed)?;
    Ok((dataset.subset(&train_idx), dataset.subset(&val_idx)))
}

/// Normalized features and encoded targets of the training part, split
/// according to `cfg`.
pub(crate) struct Prepared {
    pub codec: LabelCodec,
    pub train_x: Matrix,
    pub train_t: Matrix,
    pub val_x: Matrix,
    pub val_t: Matrix,
}

pub(crate) fn prepare(mode: ModelMode, dataset: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    if dataset.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    cfg.validate(mode, dataset.ap_order().len())?;
    let codec = fit_codec(mode, dataset)?;
    let features = cfg.normalizer.normalize(dataset)?;
    let targets = codec.targets(dataset)?;
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.train_ratio, cfg.split_seed)?;
    if train_idx.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    Ok(Prepared {
        codec,
        train_x: features.select_rows(&train_idx),
        train_t: targets.select_rows(&train_idx),
        val_x: features.select_rows(&val_idx),
        val_t: targets.select_rows(&val_idx),
    })
}

pub(crate) fn pretrain_for(prepared: &Prepared, cfg: &PipelineConfig) -> Result<PretrainedSae> {
    pretrain_sae(&prepared.train_x, &cfg.sae, cfg.seed)
}

pub(crate) fn finish_training(
    mode: ModelMode,
    dataset: &Dataset,
    cfg: &PipelineConfig,
    prepared: &Prepared,
    sae: &PretrainedSae,
) -> Result<TrainedModel> {
    let mut network = build_stacked(
        &sae.encoder,
        &cfg.classifier,
        &prepared.codec,
        derive_seed(cfg.seed, STAGE_CLS_INIT),
    )?;
    let options = TrainOptions {
        epochs: cfg.classifier.epochs,
        batch_size: cfg.classifier.batch_size,
        seed: derive_seed(cfg.seed, STAGE_CLS_TRAIN),
        metric: prepared.codec.metric(),
        frozen_layers: if cfg.classifier.freeze_encoder {
            sae.encoder.layer_count()
        } else {
            0
        },
    };
    let history = train(
        &mut network,
        &prepared.train_x,
        &prepared.train_t,
        cfg.classifier.optimizer,
        &options,
        Some((&prepared.val_x, &prepared.val_t)),
    )?;
    Ok(TrainedModel {
        mode,
        normalizer: cfg.normalizer,
        ap_order: dataset.ap_order().to_vec(),
        codec: prepared.codec.clone(),
        network,
        config: cfg.clone(),
        sae_history: sae.history.clone(),
        history,
    })
}

/// Full pipeline: normalize, split, pretrain the SAE on the training part,
/// stack the classifier and train it. The validation part is scored after
/// every epoch.
pub fn train_model(mode: ModelMode, dataset: &Dataset, cfg: &PipelineConfig) -> Result<TrainedModel> {
    let prepared = prepare(mode, dataset, cfg)?;
    let sae = pretrain_for(&prepared, cfg)?;
    let model = finish_training(mode, dataset, cfg, &prepared, &sae)?;
    model.validate()?;
    Ok(model)
}

pub fn train_hierarchical(dataset: &Dataset, cfg: &PipelineConfig) -> Result<TrainedModel> {
    train_model(ModelMode::Hierarchical, dataset, cfg)
}

pub fn train_flattened(dataset: &Dataset, cfg: &PipelineConfig) -> Result<TrainedModel> {
    train_model(ModelMode::Flattened, dataset, cfg)
}

pub fn train_floor_level(dataset: &Dataset, cfg: &PipelineConfig) -> Result<TrainedModel> {
    train_model(ModelMode::FloorLevel, dataset, cfg)
}
