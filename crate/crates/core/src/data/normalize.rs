use serde::{Deserialize, Serialize};

use super::record::{Dataset, FingerprintRecord, MAX_RSS_DBM, MIN_RSS_DBM};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Affine map of RSS readings onto `[0, 1]`.
///
/// Undetected APs are first replaced by `not_detected_fill`; the result is
/// `(x - min_dbm) / (max_dbm - min_dbm)` clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub not_detected_fill: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
}

impl Default for Normalizer {
    /// Fill −110 dBm, map [−110, 0] dBm onto [0, 1].
    fn default() -> Self {
        Self {
            not_detected_fill: MIN_RSS_DBM,
            min_dbm: MIN_RSS_DBM,
            max_dbm: MAX_RSS_DBM,
        }
    }
}

impl Normalizer {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_dbm > self.min_dbm) || !self.min_dbm.is_finite() || !self.max_dbm.is_finite() {
            return Err(Error::config(format!(
                "normalizer needs max_dbm > min_dbm (got {} and {})",
                self.max_dbm, self.min_dbm
            )));
        }
        if !self.not_detected_fill.is_finite() {
            return Err(Error::config("not-detected fill must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, rss: Option<f64>) -> f64 {
        let x = rss.unwrap_or(self.not_detected_fill);
        ((x - self.min_dbm) / (self.max_dbm - self.min_dbm)).clamp(0.0, 1.0)
    }

    pub fn features(&self, rss: &[Option<f64>]) -> Vec<f64> {
        rss.iter().map(|&v| self.value(v)).collect()
    }

    /// Feature matrix for `records`, one row per record.
    pub fn normalize_records(&self, records: &[FingerprintRecord]) -> Result<Matrix> {
        self.validate()?;
        let cols = records.first().map_or(0, |r| r.rss.len());
        let mut data = Vec::with_capacity(records.len() * cols);
        for (i, r) in records.iter().enumerate() {
            if r.rss.len() != cols {
                return Err(Error::shape(format!(
                    "record {i} has {} readings, expected {cols}",
                    r.rss.len()
                )));
            }
            data.extend(r.rss.iter().map(|&v| self.value(v)));
        }
        Matrix::from_vec(records.len(), cols, data)
    }

    pub fn normalize(&self, dataset: &Dataset) -> Result<Matrix> {
        self.validate()?;
        let cols = dataset.ap_order().len();
        let mut data = Vec::with_capacity(dataset.len() * cols);
        for r in dataset.records() {
            data.extend(r.rss.iter().map(|&v| self.value(v)));
        }
        Matrix::from_vec(dataset.len(), cols, data)
    }
}
