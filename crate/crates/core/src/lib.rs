//! Wi-Fi fingerprint indoor localization.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small dense feed-forward engine (activations, losses including
//!   class-weighted binary cross-entropy, ADAM/AdaGrad, inverted dropout,
//!   seeded mini-batch training).
//! - [`data`]: UJIIndoorLoc and local-store ingestion, RSS normalization,
//!   label codecs, splitting and a synthetic single-floor generator.
//! - [`models`]: stacked-autoencoder pretraining and the three classification
//!   pipelines (hierarchical multi-label, flattened multi-class, floor-level
//!   location), plus the versioned model file.
//! - [`eval`]: accuracy metrics, the class-weight sweep and its reports.

pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
