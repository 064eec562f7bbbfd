use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weakest reading kept after ingestion; weaker values are clamped up to it.
pub const MIN_RSS_DBM: f64 = -110.0;
/// Strongest reading kept after ingestion.
pub const MAX_RSS_DBM: f64 = 0.0;

/// One RSS scan: a reading per AP of the owning dataset (`None` when the AP
/// was not detected) plus whatever labels and metadata came with it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FingerprintRecord {
    pub rss: Vec<Option<f64>>,
    pub building_id: Option<u32>,
    pub floor_id: Option<u32>,
    pub location_id: Option<String>,
    pub device_id: Option<String>,
    pub timestamp: Option<i64>,
}

impl FingerprintRecord {
    pub fn new(rss: Vec<Option<f64>>) -> Self {
        Self {
            rss,
            ..Default::default()
        }
    }

    pub fn with_building_floor(mut self, building: u32, floor: u32) -> Self {
        self.building_id = Some(building);
        self.floor_id = Some(floor);
        self
    }

    pub fn with_location(mut self, location: impl Into<String>) -> Self {
        self.location_id = Some(location.into());
        self
    }

    /// The record's label under `kind`, if present.
    pub fn label(&self, kind: DatasetKind) -> Option<Label> {
        match kind {
            DatasetKind::BuildingFloor => Some(Label::BuildingFloor {
                building: self.building_id?,
                floor: self.floor_id?,
            }),
            DatasetKind::FloorLevel => self.location_id.clone().map(Label::Location),
        }
    }
}

/// Clamps a detected reading into `[MIN_RSS_DBM, MAX_RSS_DBM]`.
pub fn clamp_rss(v: f64) -> f64 {
    v.clamp(MIN_RSS_DBM, MAX_RSS_DBM)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Labeled by (building, floor), e.g. UJIIndoorLoc.
    BuildingFloor,
    /// Labeled by an opaque location id, e.g. "EB306".
    FloorLevel,
}

/// A classification target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    BuildingFloor { building: u32, floor: u32 },
    Location(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::BuildingFloor { building, floor } => write!(f, "B{building}-F{floor}"),
            Label::Location(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FingerprintRecord>,
    ap_order: Vec<String>,
    kind: DatasetKind,
}

impl Dataset {
    /// Checks that every record has one reading per AP and carries the
    /// label `kind` requires.
    pub fn new(records: Vec<FingerprintRecord>, ap_order: Vec<String>, kind: DatasetKind) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.rss.len() != ap_order.len() {
                return Err(Error::shape(format!(
                    "record {i} has {} readings for {} APs",
                    r.rss.len(),
                    ap_order.len()
                )));
            }
            if r.label(kind).is_none() {
                return Err(Error::label(format!("record {i} lacks a {kind:?} label")));
            }
        }
        Ok(Self {
            records,
            ap_order,
            kind,
        })
    }

    pub fn empty(ap_order: Vec<String>, kind: DatasetKind) -> Self {
        Self {
            records: Vec::new(),
            ap_order,
            kind,
        }
    }

    pub fn records(&self) -> &[FingerprintRecord] {
        &self.records
    }

    pub fn ap_order(&self) -> &[String] {
        &self.ap_order
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records
            .iter()
            .map(|r| r.label(self.kind).expect("validated at construction"))
            .collect()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ap_order: self.ap_order.clone(),
            kind: self.kind,
        }
    }

    /// Re-expresses every record over `ap_order`: shared APs keep their
    /// readings, APs missing here become not-detected.
    /// Returns the aligned dataset and how many of `ap_order` were unknown.
    pub fn aligned_to(&self, ap_order: &[String]) -> (Dataset, usize) {
        let index: std::collections::HashMap<&str, usize> = self
            .ap_order
            .iter()
            .enumerate()
            .map(|(i, ap)| (ap.as_str(), i))
            .collect();
        let mapping: Vec<Option<usize>> = ap_order.iter().map(|ap| index.get(ap.as_str()).copied()).collect();
        let missing = mapping.iter().filter(|m| m.is_none()).count();
        let records = self
            .records
            .iter()
            .map(|r| FingerprintRecord {
                rss: mapping.iter().map(|m| m.and_then(|i| r.rss[i])).collect(),
                ..r.clone()
            })
            .collect();
        (
            Dataset {
                records,
                ap_order: ap_order.to_vec(),
                kind: self.kind,
            },
            missing,
        )
    }
}
