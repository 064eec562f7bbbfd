//! Fingerprint datasets: ingestion, normalization, label codecs, splitting
//! and synthetic generation.

mod codec;
mod normalize;
mod record;
mod split;
mod store;
mod synthetic;
mod uji;

use std::io::{BufRead, BufReader};
use std::path::Path;

pub use codec::LabelCodec;
pub use normalize::Normalizer;
pub use record::{clamp_rss, Dataset, DatasetKind, FingerprintRecord, Label, MAX_RSS_DBM, MIN_RSS_DBM};
pub use split::{split, split_indices};
pub use store::{append_store, load_store, write_store, FingerprintStore};
pub use synthetic::{
    generate_synthetic_campus_dataset, generate_synthetic_floor_dataset, path_loss_rss, SyntheticAccessPoint,
    SyntheticCampusConfig, SyntheticFloorConfig, SyntheticLocation, DETECTION_FLOOR_DBM, PATH_LOSS_EXPONENT,
    REFERENCE_DISTANCE_M, REFERENCE_POWER_DBM,
};
pub use uji::{parse_ujiindoorloc, read_ujiindoorloc, write_ujiindoorloc, UJI_NOT_DETECTED};

use crate::error::{Error, Result};

/// Loads either a fingerprint store or a UJIIndoorLoc CSV, chosen by the
/// header's first column.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    if first.starts_with("location_id") {
        load_store(path)
    } else {
        parse_ujiindoorloc(path)
    }
}
