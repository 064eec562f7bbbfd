//! Mapping between labels and network target vectors.
//!
//! Three layouts are supported:
//!
//! - hierarchical: building one-hot followed by floor one-hot, so building 2
//!   and floor 1 out of (3, 5) become `001|01000`; decoding splits the
//!   output at `building_count` and takes each segment's argmax.
//! - flattened: one class per (building, floor) pair seen in training data,
//!   ordered lexicographically.
//! - categorical: one class per location id, ordered lexicographically.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::record::{Dataset, DatasetKind, Label};
use crate::error::{Error, Result};
use crate::nn::{argmax, Matrix, Metric};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LabelCodec {
    Hierarchical {
        building_count: usize,
        max_floor_count: usize,
    },
    Flattened {
        classes: Vec<(u32, u32)>,
    },
    Categorical {
        classes: Vec<String>,
    },
}

impl LabelCodec {
    pub fn hierarchical(building_count: usize, max_floor_count: usize) -> Result<Self> {
        if building_count == 0 || max_floor_count == 0 {
            return Err(Error::config(
                "hierarchical codec needs at least one building and one floor",
            ));
        }
        Ok(LabelCodec::Hierarchical {
            building_count,
            max_floor_count,
        })
    }

    /// Building count = largest building id + 1; floor count = largest floor
    /// id + 1 over all buildings.
    pub fn fit_hierarchical(dataset: &Dataset) -> Result<Self> {
        let pairs = building_floor_pairs(dataset)?;
        let buildings = pairs
            .iter()
            .map(|p| p.0)
            .max()
            .ok_or_else(|| Error::config("empty dataset"))?;
        let floors = pairs.iter().map(|p| p.1).max().unwrap_or(0);
        Self::hierarchical(buildings as usize + 1, floors as usize + 1)
    }

    pub fn fit_flattened(dataset: &Dataset) -> Result<Self> {
        let classes: Vec<(u32, u32)> = building_floor_pairs(dataset)?.into_iter().collect();
        if classes.is_empty() {
            return Err(Error::config("empty dataset"));
        }
        Ok(LabelCodec::Flattened { classes })
    }

    pub fn fit_categorical(dataset: &Dataset) -> Result<Self> {
        if dataset.kind() != DatasetKind::FloorLevel {
            return Err(Error::config("categorical codec needs a floor-level dataset"));
        }
        let classes: BTreeSet<String> = dataset.records().iter().filter_map(|r| r.location_id.clone()).collect();
        if classes.is_empty() {
            return Err(Error::config("empty dataset"));
        }
        Ok(LabelCodec::Categorical {
            classes: classes.into_iter().collect(),
        })
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            LabelCodec::Hierarchical { .. } => "hierarchical",
            LabelCodec::Flattened { .. } => "flattened",
            LabelCodec::Categorical { .. } => "categorical",
        }
    }

    /// Length of a target vector.
    pub fn dim(&self) -> usize {
        match self {
            LabelCodec::Hierarchical {
                building_count,
                max_floor_count,
            } => building_count + max_floor_count,
            LabelCodec::Flattened { classes } => classes.len(),
            LabelCodec::Categorical { classes } => classes.len(),
        }
    }

    /// Names of the output units, in output order.
    pub fn output_names(&self) -> Vec<String> {
        match self {
            LabelCodec::Hierarchical {
                building_count,
                max_floor_count,
            } => (0..*building_count)
                .map(|b| format!("B{b}"))
                .chain((0..*max_floor_count).map(|f| format!("F{f}")))
                .collect(),
            LabelCodec::Flattened { classes } => classes.iter().map(|(b, f)| format!("B{b}-F{f}")).collect(),
            LabelCodec::Categorical { classes } => classes.clone(),
        }
    }

    /// How training judges a row correct under this layout.
    pub fn metric(&self) -> Metric {
        match self {
            LabelCodec::Hierarchical { building_count, .. } => Metric::ArgmaxSplit { at: *building_count },
            _ => Metric::Argmax,
        }
    }

    pub fn encode_hierarchical(&self, building: u32, floor: u32) -> Result<Vec<f64>> {
        let LabelCodec::Hierarchical {
            building_count,
            max_floor_count,
        } = *self
        else {
            return Err(Error::config("not a hierarchical codec"));
        };
        if building as usize >= building_count || floor as usize >= max_floor_count {
            return Err(Error::label(format!(
                "(building {building}, floor {floor}) outside ({building_count}, {max_floor_count})"
            )));
        }
        let mut v = vec![0.0; building_count + max_floor_count];
        v[building as usize] = 1.0;
        v[building_count + floor as usize] = 1.0;
        Ok(v)
    }

    /// Splits a hierarchical output into building and floor segments and
    /// returns each segment's argmax (ties to the lowest index).
    pub fn decode_argmax_split(&self, output: &[f64]) -> Result<(u32, u32)> {
        let LabelCodec::Hierarchical { building_count, .. } = *self else {
            return Err(Error::config("not a hierarchical codec"));
        };
        self.check_len(output)?;
        let (b, f) = output.split_at(building_count);
        Ok((
            argmax(b).expect("non-empty segment") as u32,
            argmax(f).expect("non-empty segment") as u32,
        ))
    }

    pub fn encode_flattened(&self, building: u32, floor: u32) -> Result<Vec<f64>> {
        let LabelCodec::Flattened { classes } = self else {
            return Err(Error::config("not a flattened codec"));
        };
        let idx = classes
            .binary_search(&(building, floor))
            .map_err(|_| Error::label(format!("unseen (building {building}, floor {floor}) pair")))?;
        Ok(one_hot(classes.len(), idx))
    }

    fn check_len(&self, output: &[f64]) -> Result<()> {
        if output.len() != self.dim() {
            return Err(Error::shape(format!(
                "output has {} values, codec expects {}",
                output.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, label: &Label) -> Result<Vec<f64>> {
        match (self, label) {
            (LabelCodec::Hierarchical { .. }, Label::BuildingFloor { building, floor }) => {
                self.encode_hierarchical(*building, *floor)
            }
            (LabelCodec::Flattened { .. }, Label::BuildingFloor { building, floor }) => {
                self.encode_flattened(*building, *floor)
            }
            (LabelCodec::Categorical { classes }, Label::Location(id)) => {
                let idx = classes
                    .binary_search(id)
                    .map_err(|_| Error::label(format!("unknown location '{id}'")))?;
                Ok(one_hot(classes.len(), idx))
            }
            _ => Err(Error::label(format!(
                "label {label} does not fit a {} codec",
                self.mode_name()
            ))),
        }
    }

    pub fn decode(&self, output: &[f64]) -> Result<Label> {
        self.check_len(output)?;
        match self {
            LabelCodec::Hierarchical { .. } => {
                let (building, floor) = self.decode_argmax_split(output)?;
                Ok(Label::BuildingFloor { building, floor })
            }
            LabelCodec::Flattened { classes } => {
                let (building, floor) = classes[argmax(output).expect("non-empty output")];
                Ok(Label::BuildingFloor { building, floor })
            }
            LabelCodec::Categorical { classes } => Ok(Label::Location(
                classes[argmax(output).expect("non-empty output")].clone(),
            )),
        }
    }

    /// Every label this codec can produce, in output order where defined.
    pub fn all_labels(&self) -> Vec<Label> {
        match self {
            LabelCodec::Hierarchical {
                building_count,
                max_floor_count,
            } => (0..*building_count as u32)
                .flat_map(|building| {
                    (0..*max_floor_count as u32).map(move |floor| Label::BuildingFloor { building, floor })
                })
                .collect(),
            LabelCodec::Flattened { classes } => classes
                .iter()
                .map(|&(building, floor)| Label::BuildingFloor { building, floor })
                .collect(),
            LabelCodec::Categorical { classes } => classes.iter().cloned().map(Label::Location).collect(),
        }
    }

    /// Target matrix for a dataset, one encoded row per record.
    pub fn targets(&self, dataset: &Dataset) -> Result<Matrix> {
        let dim = self.dim();
        let mut data = Vec::with_capacity(dataset.len() * dim);
        for label in dataset.labels() {
            data.extend(self.encode(&label)?);
        }
        Matrix::from_vec(dataset.len(), dim, data)
    }
}

fn one_hot(len: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[idx] = 1.0;
    v
}

fn building_floor_pairs(dataset: &Dataset) -> Result<BTreeSet<(u32, u32)>> {
    if dataset.kind() != DatasetKind::BuildingFloor {
        return Err(Error::config("codec needs a building/floor dataset"));
    }
    Ok(dataset
        .records()
        .iter()
        .filter_map(|r| Some((r.building_id?, r.floor_id?)))
        .collect())
}
