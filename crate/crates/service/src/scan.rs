use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use wifiloc_core::data::{clamp_rss, FingerprintRecord};

use crate::ApiError;

/// One AP reading as sent by a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub ap: String,
    pub rss: f64,
}

/// A scan placed on a model's AP order.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedScan {
    pub record: FingerprintRecord,
    /// Request APs the model does not know.
    pub dropped: usize,
}

pub(crate) fn check_entries(scans: &[ScanEntry]) -> Result<(), ApiError> {
    let mut seen = HashSet::with_capacity(scans.len());
    for s in scans {
        if s.ap.is_empty() {
            return Err(ApiError::BadRequest("empty AP id".into()));
        }
        if !s.rss.is_finite() {
            return Err(ApiError::BadRequest(format!(
                "RSS for AP '{}' is not a finite number",
                s.ap
            )));
        }
        if !seen.insert(s.ap.as_str()) {
            return Err(ApiError::BadRequest(format!("AP '{}' appears more than once", s.ap)));
        }
    }
    Ok(())
}

/// Places `scans` on `ap_order`: model APs missing from the request are not
/// detected, request APs missing from the model are dropped and counted.
pub fn map_scan(scans: &[ScanEntry], ap_order: &[String]) -> Result<MappedScan, ApiError> {
    check_entries(scans)?;
    let index: HashMap<&str, usize> = ap_order.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut rss = vec![None; ap_order.len()];
    let mut dropped = 0;
    for s in scans {
        match index.get(s.ap.as_str()) {
            Some(&i) => rss[i] = Some(clamp_rss(s.rss)),
            None => dropped += 1,
        }
    }
    if dropped == scans.len() {
        return Err(ApiError::Unmappable(format!(
            "none of the {} scanned APs are known to the model",
            scans.len()
        )));
    }
    Ok(MappedScan {
        record: FingerprintRecord::new(rss),
        dropped,
    })
}

/// Request body for a labeled scan from a record aligned to `ap_order`.
pub fn scan_from_record(record: &FingerprintRecord, ap_order: &[String]) -> Vec<ScanEntry> {
    ap_order
        .iter()
        .zip(&record.rss)
        .filter_map(|(ap, v)| v.map(|rss| ScanEntry { ap: ap.clone(), rss }))
        .collect()
}
