//! Convergence and runtime curves from a directory of trial logs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::study::TrialLog;
use crate::error::{Error, Result};

/// Trial counts reported on every curve.
pub const CURVE_STEP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub dataset: String,
    pub sampler: String,
    pub seed: u64,
    pub n_trials: usize,
    pub best_f1: f64,
    pub f1_ratio: Option<f64>,
    pub runtime_s: f64,
    pub runtime_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanCurveRow {
    pub dataset: String,
    pub sampler: String,
    pub n_seeds: usize,
    pub n_trials: usize,
    pub mean_best_f1: f64,
    pub mean_f1_ratio: Option<f64>,
    pub mean_runtime_ratio: Option<f64>,
}

/// Loads every `*.jsonl` log in `dir`, sorted by file name.
pub fn load_logs(dir: &Path) -> Result<Vec<TrialLog>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no trial logs in {}", dir.display())));
    }
    paths.iter().map(|p| TrialLog::read(p)).collect()
}

/// Per-log curve rows at 5, 10, … trials. Ratios are filled when a grid log
/// for the same dataset is among `logs`.
pub fn curves(logs: &[TrialLog]) -> Vec<CurveRow> {
    let grids: BTreeMap<&str, &TrialLog> = logs
        .iter()
        .filter(|l| l.sampler == "grid")
        .map(|l| (l.dataset.as_str(), l))
        .collect();
    let mut rows = Vec::new();
    for log in logs.iter().filter(|l| l.sampler != "grid") {
        let grid = grids.get(log.dataset.as_str());
        let grid_best = grid.and_then(|g| g.best()).map(|t| t.f1).filter(|f| *f > 0.0);
        let grid_time = grid.map(|g| g.total_runtime()).filter(|t| *t > 0.0);
        let best = log.cumulative_best();
        let seed = log.trials.first().map_or(0, |t| t.seed);
        let mut runtime = 0.0;
        for (i, t) in log.trials.iter().enumerate() {
            runtime += t.runtime_s;
            let n = i + 1;
            if n % CURVE_STEP != 0 {
                continue;
            }
            rows.push(CurveRow {
                dataset: log.dataset.clone(),
                sampler: log.sampler.clone(),
                seed,
                n_trials: n,
                best_f1: best[i],
                f1_ratio: grid_best.map(|g| best[i] / g),
                runtime_s: runtime,
                runtime_ratio: grid_time.map(|g| runtime / g),
            });
        }
    }
    rows
}

/// Seed-averaged curves, one per (dataset, sampler).
pub fn mean_curves(rows: &[CurveRow]) -> Vec<MeanCurveRow> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset.as_str(), r.sampler.as_str(), r.n_trials))
            .or_default()
            .push(r);
    }
    let mean = |xs: Vec<Option<f64>>| -> Option<f64> {
        let xs: Option<Vec<f64>> = xs.into_iter().collect();
        xs.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    groups
        .into_iter()
        .map(|((dataset, sampler, n), rs)| MeanCurveRow {
            dataset: dataset.to_string(),
            sampler: sampler.to_string(),
            n_seeds: rs.len(),
            n_trials: n,
            mean_best_f1: rs.iter().map(|r| r.best_f1).sum::<f64>() / rs.len() as f64,
            mean_f1_ratio: mean(rs.iter().map(|r| r.f1_ratio).collect()),
            mean_runtime_ratio: mean(rs.iter().map(|r| r.runtime_ratio).collect()),
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
