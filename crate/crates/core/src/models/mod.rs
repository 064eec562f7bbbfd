//! Training pipelines (autoencoder pretraining, stacked classifiers) and
//! model files.

mod config;
mod persist;
mod pipeline;

pub use config::{ClassWeights, ClassifierConfig, ModelMode, PipelineConfig, SaeConfig};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use pipeline::{
    build_stacked, hierarchical_output_weights, pretrain_sae, train_flattened, train_floor_level, train_hierarchical,
    train_model, validation_split, Prediction, PretrainedSae, TrainedModel,
};
pub(crate) use pipeline::{finish_training, prepare, pretrain_for};
