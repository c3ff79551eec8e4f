use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Setting;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Per-seed results of one setting with mean, population std and max of
/// the test accuracy. With no successful seed the statistics are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub setting: Setting,
    pub train_fraction: f64,
    pub per_seed: Vec<SeedResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<SeedFailure>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl RunReport {
    pub fn new(
        setting: Setting,
        train_fraction: f64,
        per_seed: Vec<SeedResult>,
        failures: Vec<SeedFailure>,
    ) -> Self {
        let acc: Vec<f64> = per_seed.iter().map(|r| r.test_accuracy).collect();
        let (mean, std, max) = if acc.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, var.sqrt(), max)
        };
        Self {
            setting,
            train_fraction,
            per_seed,
            failures,
            mean,
            std,
            max,
        }
    }
}

/// Run `run` once per seed (in parallel, one independent model per seed) and
/// collect a report in seed-list order. Failed seeds are listed, not fatal.
pub fn stability_study<F>(
    seeds: &[u64],
    setting: Setting,
    train_fraction: f64,
    run: F,
) -> RunReport
where
    F: Fn(u64) -> Result<SeedResult> + Sync,
{
    let results: Vec<(u64, Result<SeedResult>)> =
        seeds.par_iter().map(|&s| (s, run(s))).collect();
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(row) => per_seed.push(row),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    RunReport::new(setting, train_fraction, per_seed, failures)
}
