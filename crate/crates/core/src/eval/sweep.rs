use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_model, MeanSd, MetricsReport};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    finish_training, prepare, pretrain_for, validation_split, ClassWeights, ModelMode, PipelineConfig,
};

/// Building:floor weight pairs of the standard grid.
pub const DEFAULT_WEIGHT_PAIRS: [(f64, f64); 5] = [(1.0, 1.0), (2.0, 1.0), (5.0, 1.0), (10.0, 1.0), (20.0, 1.0)];
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [1, 2, 3];

pub fn default_weight_pairs() -> Vec<ClassWeights> {
    DEFAULT_WEIGHT_PAIRS
        .iter()
        .map(|&(b, f)| ClassWeights::new(b, f))
        .collect()
}

/// One trained and evaluated (weight pair, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub building_weight: f64,
    pub floor_weight: f64,
    pub seed: u64,
    pub building_acc: f64,
    pub floor_acc: f64,
    pub overall_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Mean and spread over the seeds of one weight pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub building_weight: f64,
    pub floor_weight: f64,
    pub seeds: Vec<u64>,
    pub overall: MeanSd,
    pub building: MeanSd,
    pub floor: MeanSd,
}

impl SweepResult {
    /// One summary per weight pair, in order of first appearance.
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut order: Vec<(u64, u64)> = Vec::new();
        let mut groups: HashMap<(u64, u64), Vec<&SweepRow>> = HashMap::new();
        for row in &self.rows {
            let key = (row.building_weight.to_bits(), row.floor_weight.to_bits());
            if !groups.contains_key(&key) {
                order.push(key);
            }
            groups.entry(key).or_default().push(row);
        }
        order
            .into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let stat = |f: fn(&SweepRow) -> f64| {
                    MeanSd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("group is non-empty")
                };
                SweepSummary {
                    building_weight: rows[0].building_weight,
                    floor_weight: rows[0].floor_weight,
                    seeds: rows.iter().map(|r| r.seed).collect(),
                    overall: stat(|r| r.overall_acc),
                    building: stat(|r| r.building_acc),
                    floor: stat(|r| r.floor_acc),
                }
            })
            .collect()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

/// Trains one hierarchical model per (pair, seed) and scores it on `test`,
/// or on the validation split when `test` is `None`. The split uses
/// `cfg.split_seed` for every cell; `seed` varies initialization, shuffling
/// and dropout. Each seed's autoencoder is trained once and shared by all
/// pairs. At most `jobs` cells run at a time.
pub fn sweep_class_weights(
    dataset: &Dataset,
    test: Option<&Dataset>,
    cfg: &PipelineConfig,
    pairs: &[ClassWeights],
    seeds: &[u64],
    jobs: usize,
) -> Result<SweepResult> {
    if pairs.is_empty() || seeds.is_empty() {
        return Err(Error::config("a sweep needs at least one weight pair and one seed"));
    }
    let mode = ModelMode::Hierarchical;
    let prepared = prepare(mode, dataset, cfg)?;
    for w in pairs {
        let mut c = cfg.clone();
        c.classifier.class_weights = *w;
        c.validate(mode, dataset.ap_order().len())?;
    }
    let held_out = match test {
        Some(t) => t.clone(),
        None => validation_split(dataset, cfg)?.1,
    };
    if held_out.is_empty() {
        return Err(Error::config("sweep evaluation set is empty"));
    }

    let pool = pool(jobs)?;
    pool.install(|| {
        let saes = seeds
            .par_iter()
            .map(|&seed| pretrain_for(&prepared, &cfg.clone().with_seed_only(seed)))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<(usize, ClassWeights)> = pairs
            .iter()
            .flat_map(|&w| (0..seeds.len()).map(move |s| (s, w)))
            .collect();
        let rows = cells
            .par_iter()
            .map(|&(s, w)| {
                let mut c = cfg.clone().with_seed_only(seeds[s]);
                c.classifier.class_weights = w;
                let model = finish_training(mode, dataset, &c, &prepared, &saes[s])?;
                let report = evaluate_model(&model, &held_out)?;
                Ok(SweepRow {
                    building_weight: w.building,
                    floor_weight: w.floor,
                    seed: seeds[s],
                    building_acc: report.building_accuracy.unwrap_or(f64::NAN),
                    floor_acc: report.floor_accuracy.unwrap_or(f64::NAN),
                    overall_acc: report.overall_accuracy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult { rows })
    })
}

impl PipelineConfig {
    fn with_seed_only(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Per-seed metrics of repeated full runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub runs: Vec<(u64, MetricsReport)>,
}

impl TrialResult {
    pub fn overall(&self) -> MeanSd {
        MeanSd::of(&self.runs.iter().map(|(_, r)| r.overall_accuracy).collect::<Vec<_>>()).unwrap_or(MeanSd {
            mean: f64::NAN,
            sd: f64::NAN,
        })
    }

    pub fn building(&self) -> Option<MeanSd> {
        MeanSd::of(
            &self
                .runs
                .iter()
                .filter_map(|(_, r)| r.building_accuracy)
                .collect::<Vec<_>>(),
        )
    }

    pub fn floor(&self) -> Option<MeanSd> {
        MeanSd::of(
            &self
                .runs
                .iter()
                .filter_map(|(_, r)| r.floor_accuracy)
                .collect::<Vec<_>>(),
        )
    }
}

/// Complete train/evaluate runs, one per seed (both the split and the
/// training use that seed). Scores on `test` when given, otherwise on each
/// run's own validation split.
pub fn run_trials(
    mode: ModelMode,
    dataset: &Dataset,
    test: Option<&Dataset>,
    cfg: &PipelineConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<TrialResult> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    pool(jobs)?.install(|| {
        let runs = seeds
            .par_iter()
            .map(|&seed| {
                let c = cfg.clone().with_seed(seed);
                let model = crate::models::train_model(mode, dataset, &c)?;
                let report = match test {
                    Some(t) => evaluate_model(&model, t)?,
                    None => evaluate_model(&model, &validation_split(dataset, &c)?.1)?,
                };
                Ok((seed, report))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialResult { runs })
    })
}

/// `0.9333933` -> `9.333933e-01`.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.6e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = exp.strip_prefix('-').map_or(("+", exp), |d| ("-", d));
            format!("{mantissa}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

/// Text table with one row per weight pair: the two weights, then mean
/// overall, building and floor accuracy over the seeds.
pub fn render_report(result: &SweepResult) -> String {
    let header = [
        "Building weight",
        "Floor weight",
        "Overall",
        "Building",
        "Floor",
        "Seeds",
    ];
    let rows: Vec<[String; 6]> = result
        .summary()
        .iter()
        .map(|s| {
            [
                format!("{}", s.building_weight),
                format!("{}", s.floor_weight),
                format_sci(s.overall.mean),
                format_sci(s.building.mean),
                format_sci(s.floor.mean),
                s.seeds.len().to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join(" | "));
    };
    line(&mut out, &header);
    let _ = writeln!(
        out,
        "{}",
        widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-")
    );
    for r in &rows {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// One JSON object per row, newline-terminated.
pub fn write_sweep_jsonl<W: Write>(result: &SweepResult, mut writer: W) -> Result<()> {
    for row in &result.rows {
        serde_json::to_writer(&mut writer, row).map_err(|e| Error::format(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_sweep_jsonl<R: BufRead>(reader: R) -> Result<SweepResult> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(SweepResult { rows })
}
