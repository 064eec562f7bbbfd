//! Log-distance path-loss fingerprint generators for desk-scale testing.
//!
//! RSS at distance `d` from an AP is `P0 - 10 n log10(d / d0)` plus
//! Gaussian noise, with `P0 = -30 dBm`, `n = 3`, `d0 = 1 m`. Readings
//! below -100 dBm are reported as not detected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::record::{clamp_rss, Dataset, DatasetKind, FingerprintRecord};
use crate::error::{Error, Result};

pub const REFERENCE_POWER_DBM: f64 = -30.0;
pub const PATH_LOSS_EXPONENT: f64 = 3.0;
pub const REFERENCE_DISTANCE_M: f64 = 1.0;
pub const DETECTION_FLOOR_DBM: f64 = -100.0;

/// Noise-free received power at `distance` metres; distances below the
/// reference distance are clamped to it.
pub fn path_loss_rss(distance: f64) -> f64 {
    let d = distance.max(REFERENCE_DISTANCE_M);
    REFERENCE_POWER_DBM - 10.0 * PATH_LOSS_EXPONENT * (d / REFERENCE_DISTANCE_M).log10()
}

fn observe(mean_dbm: f64, noise: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) -> Option<f64> {
    let v = mean_dbm + noise.map_or(0.0, |n| n.sample(rng));
    (v >= DETECTION_FLOOR_DBM).then(|| clamp_rss(v))
}

fn noise_model(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLocation {
    pub id: String,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAccessPoint {
    pub id: String,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFloorConfig {
    pub locations: Vec<SyntheticLocation>,
    pub access_points: Vec<SyntheticAccessPoint>,
    pub samples_per_location: usize,
    pub noise_sigma_db: f64,
    pub seed: u64,
}

impl SyntheticFloorConfig {
    /// Seven rooms `EE401`..`EE407` along a corridor, 10 m apart, with 48
    /// APs scattered over a 100 m x 40 m floor from a fixed layout.
    pub fn seven_rooms(samples_per_location: usize, noise_sigma_db: f64, seed: u64) -> Self {
        let locations = (0..7)
            .map(|i| SyntheticLocation {
                id: format!("EE40{}", i + 1),
                position: [20.0 + 10.0 * i as f64, 20.0],
            })
            .collect();
        let mut layout = ChaCha8Rng::seed_from_u64(0x4EE4_0000);
        let access_points = (0..48)
            .map(|i| SyntheticAccessPoint {
                id: format!("02:00:5e:00:{:02x}:{:02x}", i / 256, i % 256),
                position: [layout.random_range(0.0..100.0), layout.random_range(0.0..40.0)],
            })
            .collect();
        Self {
            locations,
            access_points,
            samples_per_location,
            noise_sigma_db,
            seed,
        }
    }
}

/// Floor-level dataset: `samples_per_location` scans at each location,
/// grouped by location in config order.
pub fn generate_synthetic_floor_dataset(cfg: &SyntheticFloorConfig) -> Result<Dataset> {
    if cfg.locations.len() < 2 {
        return Err(Error::config("synthetic floor needs at least two locations"));
    }
    if cfg.access_points.is_empty() {
        return Err(Error::config("synthetic floor needs at least one access point"));
    }
    let noise = noise_model(cfg.noise_sigma_db)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.locations.len() * cfg.samples_per_location);
    for loc in &cfg.locations {
        let means: Vec<f64> = cfg
            .access_points
            .iter()
            .map(|ap| path_loss_rss(distance(&loc.position, &ap.position)))
            .collect();
        for _ in 0..cfg.samples_per_location {
            let rss = means.iter().map(|&m| observe(m, noise.as_ref(), &mut rng)).collect();
            records.push(FingerprintRecord::new(rss).with_location(loc.id.clone()));
        }
    }
    let ap_order = cfg.access_points.iter().map(|ap| ap.id.clone()).collect();
    Dataset::new(records, ap_order, DatasetKind::FloorLevel)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Multi-building campus laid out like UJIIndoorLoc: buildings side by side,
/// APs on every floor, extra loss per floor crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCampusConfig {
    pub floors_per_building: Vec<u32>,
    pub aps_per_floor: usize,
    pub samples_per_floor: usize,
    pub noise_sigma_db: f64,
    pub floor_loss_db: f64,
    pub seed: u64,
}

impl SyntheticCampusConfig {
    /// Three buildings with 4, 4 and 5 floors (13 building/floor pairs).
    pub fn three_buildings(samples_per_floor: usize, noise_sigma_db: f64, seed: u64) -> Self {
        Self {
            floors_per_building: vec![4, 4, 5],
            aps_per_floor: 6,
            samples_per_floor,
            noise_sigma_db,
            floor_loss_db: 15.0,
            seed,
        }
    }
}

const BUILDING_SIZE_M: f64 = 40.0;
const BUILDING_SPACING_M: f64 = 70.0;
const FLOOR_HEIGHT_M: f64 = 3.5;

/// Building/floor dataset with APs named `WAP001`, `WAP002`, ...
pub fn generate_synthetic_campus_dataset(cfg: &SyntheticCampusConfig) -> Result<Dataset> {
    if cfg.floors_per_building.is_empty() || cfg.floors_per_building.contains(&0) {
        return Err(Error::config("every building needs at least one floor"));
    }
    if cfg.aps_per_floor == 0 {
        return Err(Error::config("campus needs at least one AP per floor"));
    }
    if !(cfg.floor_loss_db >= 0.0 && cfg.floor_loss_db.is_finite()) {
        return Err(Error::config("floor loss must be finite and >= 0"));
    }
    let noise = noise_model(cfg.noise_sigma_db)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = |b: usize| b as f64 * BUILDING_SPACING_M;

    // (building, floor, [x, y, z])
    let mut aps = Vec::new();
    for (b, &floors) in cfg.floors_per_building.iter().enumerate() {
        for f in 0..floors {
            for _ in 0..cfg.aps_per_floor {
                aps.push((
                    b,
                    f,
                    [
                        origin(b) + rng.random_range(0.0..BUILDING_SIZE_M),
                        rng.random_range(0.0..BUILDING_SIZE_M),
                        f as f64 * FLOOR_HEIGHT_M,
                    ],
                ));
            }
        }
    }

    let mut records = Vec::new();
    for (b, &floors) in cfg.floors_per_building.iter().enumerate() {
        for f in 0..floors {
            for _ in 0..cfg.samples_per_floor {
                let pos = [
                    origin(b) + rng.random_range(0.0..BUILDING_SIZE_M),
                    rng.random_range(0.0..BUILDING_SIZE_M),
                    f as f64 * FLOOR_HEIGHT_M + 1.2,
                ];
                let rss = aps
                    .iter()
                    .map(|(ab, af, ap)| {
                        let walls = if *ab == b { 0.0 } else { 20.0 };
                        let mean =
                            path_loss_rss(distance(&pos, ap)) - cfg.floor_loss_db * f64::from(af.abs_diff(f)) - walls;
                        observe(mean, noise.as_ref(), &mut rng)
                    })
                    .collect();
                records.push(FingerprintRecord::new(rss).with_building_floor(b as u32, f));
            }
        }
    }
    let ap_order = (1..=aps.len()).map(|i| format!("WAP{i:03}")).collect();
    Dataset::new(records, ap_order, DatasetKind::BuildingFloor)
}
