use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::models::TrainedModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub truth: String,
    pub predicted: String,
    pub count: usize,
}

/// Accuracy summary. Building and floor accuracies are present only for
/// building/floor labels; for location labels `overall_accuracy` is the
/// plain classification accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sample_count: usize,
    pub building_accuracy: Option<f64>,
    pub floor_accuracy: Option<f64>,
    pub overall_accuracy: f64,
    /// Nonzero (truth, prediction) counts, sorted by truth then prediction.
    pub confusion: Vec<ConfusionEntry>,
}

pub fn compute_metrics(predictions: &[Label], truths: &[Label]) -> Result<MetricsReport> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::config("cannot compute metrics on zero samples"));
    }
    let n = truths.len();
    let mut building = 0usize;
    let mut floor = 0usize;
    let mut exact = 0usize;
    let mut has_bf = false;
    let mut has_loc = false;
    let mut confusion: BTreeMap<(&Label, &Label), usize> = BTreeMap::new();
    for (p, t) in predictions.iter().zip(truths) {
        match (p, t) {
            (
                Label::BuildingFloor {
                    building: pb,
                    floor: pf,
                },
                Label::BuildingFloor {
                    building: tb,
                    floor: tf,
                },
            ) => {
                has_bf = true;
                building += usize::from(pb == tb);
                floor += usize::from(pf == tf);
            }
            (Label::Location(_), Label::Location(_)) => has_loc = true,
            _ => {
                return Err(Error::label(format!(
                    "prediction {p} and truth {t} are different label kinds"
                )))
            }
        }
        exact += usize::from(p == t);
        *confusion.entry((t, p)).or_default() += 1;
    }
    if has_bf && has_loc {
        return Err(Error::label("mixed building/floor and location labels"));
    }
    let frac = |c: usize| c as f64 / n as f64;
    Ok(MetricsReport {
        sample_count: n,
        building_accuracy: has_bf.then(|| frac(building)),
        floor_accuracy: has_bf.then(|| frac(floor)),
        overall_accuracy: frac(exact),
        confusion: confusion
            .into_iter()
            .map(|((t, p), count)| ConfusionEntry {
                truth: t.to_string(),
                predicted: p.to_string(),
                count,
            })
            .collect(),
    })
}

/// Describes how `dataset`'s APs differ from the model's, or `None` when
/// they match exactly.
pub fn ap_mismatch(model: &TrainedModel, dataset: &Dataset) -> Option<String> {
    if dataset.ap_order() == model.ap_order.as_slice() {
        return None;
    }
    let theirs: std::collections::HashSet<&str> = dataset.ap_order().iter().map(String::as_str).collect();
    let ours: std::collections::HashSet<&str> = model.ap_order.iter().map(String::as_str).collect();
    let missing: Vec<&str> = model
        .ap_order
        .iter()
        .map(String::as_str)
        .filter(|a| !theirs.contains(a))
        .collect();
    let extra: Vec<&str> = dataset
        .ap_order()
        .iter()
        .map(String::as_str)
        .filter(|a| !ours.contains(a))
        .collect();
    let sample = |v: &[&str]| v.iter().take(5).copied().collect::<Vec<_>>().join(", ");
    let mut msg = format!(
        "AP order mismatch: model has {} APs, dataset has {}",
        model.ap_order.len(),
        dataset.ap_order().len()
    );
    if !missing.is_empty() {
        msg += &format!(
            "; {} model APs absent from dataset (e.g. {})",
            missing.len(),
            sample(&missing)
        );
    }
    if !extra.is_empty() {
        msg += &format!(
            "; {} dataset APs unknown to model (e.g. {})",
            extra.len(),
            sample(&extra)
        );
    }
    if missing.is_empty() && extra.is_empty() {
        msg += "; same APs in a different order";
    }
    Some(msg)
}

/// Predicts every record of `dataset` and scores the predictions.
pub fn evaluate_model(model: &TrainedModel, dataset: &Dataset) -> Result<MetricsReport> {
    if let Some(msg) = ap_mismatch(model, dataset) {
        return Err(Error::config(msg));
    }
    let predicted: Vec<Label> = model.predict_dataset(dataset)?.into_iter().map(|p| p.label).collect();
    compute_metrics(&predicted, &dataset.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}
