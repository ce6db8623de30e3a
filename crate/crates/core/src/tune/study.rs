//! Trial loop, grid search and trial-log persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{stream_rng, Observation, Sampler};
use super::space::{ParamSpace, Point, SearchSpace};
use crate::datamodel::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{evaluate, PreparedDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub number: usize,
    pub config: PipelineConfig,
    pub f1: f64,
    pub runtime_s: f64,
    pub seed: u64,
}

/// Ordered trials of one study. Trial numbers run 1, 2, 3, …
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub sampler: String,
    pub budget: usize,
    pub dataset: String,
    pub trials: Vec<Trial>,
}

// One JSON line of a persisted log.
#[derive(Serialize, Deserialize)]
struct Record {
    sampler: String,
    dataset: String,
    budget: usize,
    #[serde(flatten)]
    trial: Trial,
}

impl TrialLog {
    pub fn new(sampler: impl Into<String>, budget: usize, dataset: impl Into<String>) -> Self {
        Self {
            sampler: sampler.into(),
            budget,
            dataset: dataset.into(),
            trials: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Highest f1; the earliest trial wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .fold(None, |acc: Option<&Trial>, t| match acc {
                Some(b) if b.f1 >= t.f1 => Some(b),
                _ => Some(t),
            })
    }

    /// Best f1 among the first `i + 1` trials, for every `i`.
    pub fn cumulative_best(&self) -> Vec<f64> {
        self.trials
            .iter()
            .scan(f64::NEG_INFINITY, |best, t| {
                *best = best.max(t.f1);
                Some(*best)
            })
            .collect()
    }

    pub fn total_runtime(&self) -> f64 {
        self.trials.iter().map(|t| t.runtime_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trials.iter().enumerate() {
            if t.number != i + 1 {
                return Err(Error::parse(
                    "trial log",
                    format!("trial {} found at position {}", t.number, i + 1),
                ));
            }
            if !(0.0..=1.0).contains(&t.f1) {
                return Err(Error::parse("trial log", format!("trial {} has f1 {}", t.number, t.f1)));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self, mut w: impl Write) -> Result<()> {
        for t in &self.trials {
            let rec = Record {
                sampler: self.sampler.clone(),
                dataset: self.dataset.clone(),
                budget: self.budget,
                trial: t.clone(),
            };
            let line = serde_json::to_string(&rec).map_err(|e| Error::parse("trial log", e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io("trial log", e))?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.to_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a log; a truncated final line (an interrupted write) is dropped.
    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        let mut log: Option<TrialLog> = None;
        let ctx = path.display().to_string();
        let last = lines.iter().rposition(|l| !l.trim().is_empty());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(_) if Some(i) == last && !line.ends_with('}') => break,
                Err(e) => return Err(Error::parse(&ctx, format!("line {}: {e}", i + 1))),
            };
            let log = log.get_or_insert_with(|| TrialLog::new(&rec.sampler, rec.budget, &rec.dataset));
            if rec.sampler != log.sampler || rec.dataset != log.dataset {
                return Err(Error::parse(&ctx, format!("line {} belongs to another study", i + 1)));
            }
            log.trials.push(rec.trial);
        }
        let log = log.ok_or_else(|| Error::parse(&ctx, "log is empty"))?;
        log.validate()?;
        Ok(log)
    }
}

/// Runs `budget` sequential trials of `objective`, continuing after the
/// observations already in `history`.
pub fn optimize<F>(
    space: &ParamSpace,
    sampler: &dyn Sampler,
    budget: usize,
    seed: u64,
    mut history: Vec<Observation>,
    mut objective: F,
) -> Result<Vec<Observation>>
where
    F: FnMut(&Point) -> Result<f64>,
{
    while history.len() < budget {
        let point = sampler.suggest(space, &history, seed);
        if !space.contains(&point) {
            return Err(Error::InvalidConfig(format!(
                "{} suggested {point:?} outside the search space",
                sampler.name()
            )));
        }
        let value = objective(&point)?;
        history.push(Observation { point, value });
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub budget: usize,
    pub seed: u64,
    /// Fraction of ground-truth pairs used for scoring.
    pub subsample: f64,
}

impl TuneOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            subsample: 1.0,
        }
    }
}

/// A seeded subset of `round(fraction * n)` pairs (at least one).
pub fn subsample_ground_truth(gt: &[(u32, u32)], fraction: f64, seed: u64) -> Vec<(u32, u32)> {
    if fraction >= 1.0 {
        return gt.to_vec();
    }
    let n = ((fraction * gt.len() as f64).round() as usize).clamp(1, gt.len().max(1));
    let mut pairs = gt.to_vec();
    pairs.shuffle(&mut stream_rng(seed, 0, 0x5eed));
    pairs.truncate(n);
    pairs.sort_unstable();
    pairs
}

fn required_gt<'a>(prepared: &'a PreparedDataset<'_>) -> Result<&'a [(u32, u32)]> {
    match prepared.ground_truth() {
        Some(gt) if !gt.is_empty() => Ok(gt),
        _ => Err(Error::EmptyGroundTruth),
    }
}

/// Runs a sampler study on one dataset. With `resume`, the trials already
/// in the log are kept and numbering continues after them.
pub fn tune(
    prepared: &PreparedDataset<'_>,
    space: &SearchSpace,
    sampler: &dyn Sampler,
    opts: TuneOptions,
    resume: Option<TrialLog>,
) -> Result<TrialLog> {
    space.validate()?;
    if opts.budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    if !(opts.subsample > 0.0 && opts.subsample <= 1.0) {
        return Err(Error::InvalidArgument("subsample must lie in (0, 1]".into()));
    }
    let gt = required_gt(prepared)?;
    let scoring: Option<Vec<(u32, u32)>> =
        (opts.subsample < 1.0).then(|| subsample_ground_truth(gt, opts.subsample, opts.seed));
    let dataset = prepared.bundle().name.clone();
    let mut log = match resume {
        Some(prev) => {
            if prev.sampler != sampler.name() || prev.dataset != dataset {
                return Err(Error::InvalidArgument(format!(
                    "cannot resume a {} log for {} with {} on {}",
                    prev.sampler,
                    prev.dataset,
                    sampler.name(),
                    dataset
                )));
            }
            if let Some(t) = prev.trials.iter().find(|t| t.seed != opts.seed) {
                return Err(Error::InvalidArgument(format!(
                    "cannot resume: trial {} used seed {}",
                    t.number, t.seed
                )));
            }
            prev.validate()?;
            TrialLog { budget: opts.budget, ..prev }
        }
        None => TrialLog::new(sampler.name(), opts.budget, &dataset),
    };
    let history = log
        .trials
        .iter()
        .map(|t| {
            Ok(Observation {
                point: space.point_of(&t.config)?,
                value: t.f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ps = space.param_space();
    let trials = &mut log.trials;
    optimize(&ps, sampler, opts.budget, opts.seed, history, |point| {
        let config = space.config_of(point)?;
        let start = Instant::now();
        let res = prepared.run(&config)?;
        let f1 = match &scoring {
            Some(sub) => evaluate(&res.clusters, sub)?.f1,
            None => res.metrics.map(|m| m.f1).ok_or(Error::EmptyGroundTruth)?,
        };
        trials.push(Trial {
            number: trials.len() + 1,
            config,
            f1,
            runtime_s: start.elapsed().as_secs_f64(),
            seed: opts.seed,
        });
        Ok(f1)
    })?;
    Ok(log)
}

/// Evaluates every grid point. Trial order follows `SearchSpace::grid`.
pub fn grid_search(prepared: &PreparedDataset<'_>, space: &SearchSpace) -> Result<TrialLog> {
    space.validate()?;
    required_gt(prepared)?;
    let grid = space.grid();
    let results = grid
        .into_par_iter()
        .enumerate()
        .map(|(i, config)| {
            let start = Instant::now();
            let res = prepared.run(&config)?;
            let f1 = res.metrics.map(|m| m.f1).ok_or(Error::EmptyGroundTruth)?;
            Ok(Trial {
                number: i + 1,
                config,
                f1,
                runtime_s: start.elapsed().as_secs_f64(),
                seed: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut log = TrialLog::new("grid", results.len(), &prepared.bundle().name);
    log.trials = results;
    Ok(log)
}

/// Cumulative-best f1 divided by the grid-search best, per trial count.
pub fn f1_ratio(log: &TrialLog, grid_best_f1: f64) -> Result<Vec<f64>> {
    if !(grid_best_f1 > 0.0) {
        return Err(Error::DivisionByZero("grid-search best f1"));
    }
    Ok(log.cumulative_best().into_iter().map(|b| b / grid_best_f1).collect())
}

pub fn runtime_ratio(sampler_total_s: f64, grid_total_s: f64) -> Result<f64> {
    if !(grid_total_s > 0.0) {
        return Err(Error::DivisionByZero("grid-search runtime"));
    }
    Ok(sampler_total_s / grid_total_s)
}
