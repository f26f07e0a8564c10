use std::collections::BTreeMap;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiments::{prepare, run_seed};
use crate::results::RunResult;

/// Runs every seed of `cfg` sequentially.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let shared = prepare(cfg)?;
    let mut param_counts = BTreeMap::new();
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let mut r = run_seed(cfg, &shared, seed, &mut param_counts)?;
        r.wall_time_s = started.elapsed().as_secs_f64();
        seeds.push(r);
    }
    Ok(RunResult {
        fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        seeds,
        param_counts,
        overrides: Vec::new(),
    })
}
