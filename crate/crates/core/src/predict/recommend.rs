//! Forest tuning, configuration recommendation and leave-one-dataset-out runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::Encoder;
use super::forest::{fit_forest, mean_squared_error, ForestModel, ForestParams, MaxFeatures};
use super::instances::{dataset_instances, GenerationMode, GenerationOptions, InstanceSet};
use crate::datamodel::PipelineConfig;
use crate::embed::EmbedderRegistry;
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::pipeline::run_pipeline;
use crate::profile::{profile_dataset, DatasetFeatures};
use crate::tune::{optimize, Domain, ParamSpace, Point, SearchSpace, TpeSampler, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestTuningOptions {
    pub n_trials: usize,
    pub validation_fraction: f64,
}

impl Default for ForestTuningOptions {
    fn default() -> Self {
        Self {
            n_trials: 50,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestTuning {
    pub best: ForestParams,
    pub best_mse: f64,
    /// Every evaluated parameter set with its validation MSE.
    pub evaluations: Vec<(ForestParams, f64)>,
}

/// n_estimators 100–1000, max_depth 3–10, min_samples_split 2–20,
/// min_samples_leaf 1–20, max_features sqrt or log2.
pub fn forest_space() -> ParamSpace {
    ParamSpace::new(vec![
        ("n_estimators", Domain::Int { low: 100, high: 1000 }),
        ("max_depth", Domain::Int { low: 3, high: 10 }),
        ("min_samples_split", Domain::Int { low: 2, high: 20 }),
        ("min_samples_leaf", Domain::Int { low: 1, high: 20 }),
        ("max_features", Domain::Categorical(vec!["sqrt".into(), "log2".into()])),
    ])
}

fn params_of(point: &Point, seed: u64) -> ForestParams {
    let int = |v: &Value| v.as_f64() as usize;
    ForestParams {
        n_estimators: int(&point[0]),
        max_depth: int(&point[1]),
        min_samples_split: int(&point[2]),
        min_samples_leaf: int(&point[3]),
        max_features: if point[4] == Value::Cat(0) {
            MaxFeatures::Sqrt
        } else {
            MaxFeatures::Log2
        },
        seed,
    }
}

/// Holds out `ceil(fraction * n)` seeded-random instances of every dataset.
pub fn stratified_split(set: &InstanceSet, fraction: f64, seed: u64) -> Result<(InstanceSet, InstanceSet)> {
    let datasets = set.datasets();
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "forest tuning holds out a share of every training dataset and needs at least two datasets, got {}",
            datasets.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held: HashSet<usize> = HashSet::new();
    for d in &datasets {
        let mut idx: Vec<usize> = set
            .instances()
            .iter()
            .enumerate()
            .filter(|(_, i)| &i.dataset == d)
            .map(|(j, _)| j)
            .collect();
        idx.shuffle(&mut rng);
        let n_valid = ((fraction * idx.len() as f64).ceil() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        held.extend(idx.into_iter().take(n_valid));
    }
    let mut j = 0;
    let train = set.filter(|_| {
        j += 1;
        !held.contains(&(j - 1))
    });
    let mut j = 0;
    let valid = set.filter(|_| {
        j += 1;
        held.contains(&(j - 1))
    });
    Ok((train, valid))
}

/// TPE search over the forest hyper-parameters minimizing validation MSE.
pub fn tune_forest(
    train: &InstanceSet,
    encoder: &Encoder,
    seed: u64,
    opts: ForestTuningOptions,
) -> Result<ForestTuning> {
    let (fit_set, valid_set) = stratified_split(train, opts.validation_fraction, seed)?;
    let (x, y) = fit_set.matrix(encoder, false)?;
    let (vx, vy) = valid_set.matrix(encoder, false)?;
    let names = encoder.feature_names();
    let space = forest_space();
    let mut evaluations = Vec::with_capacity(opts.n_trials);
    optimize(&space, &TpeSampler::default(), opts.n_trials, seed, Vec::new(), |point| {
        let params = params_of(point, seed);
        let model = fit_forest(&x, &y, names.clone(), params)?;
        let mse = mean_squared_error(&model, &vx, &vy);
        evaluations.push((params, mse));
        Ok(-mse)
    })?;
    let (best, best_mse) = evaluations
        .iter()
        .fold(None, |acc: Option<(ForestParams, f64)>, &(p, m)| match acc {
            Some((_, bm)) if bm <= m => acc,
            _ => Some((p, m)),
        })
        .ok_or_else(|| Error::InvalidArgument("forest tuning needs at least one trial".into()))?;
    Ok(ForestTuning {
        best,
        best_mse,
        evaluations,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// The candidate with the highest predicted F1; ties go to the
/// lexicographically smallest encoded vector.
pub fn recommend(
    model: &ForestModel,
    encoder: &Encoder,
    target: &[f64; 12],
    candidates: &[PipelineConfig],
) -> Result<(PipelineConfig, f64)> {
    let encoded: Vec<(usize, Vec<f64>)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| encoder.encode(target, c).map(|v| (i, v)))
        .collect();
    if encoded.is_empty() {
        return Err(Error::InvalidArgument("no candidate configuration can be encoded".into()));
    }
    let rows: Vec<Vec<f64>> = encoded.iter().map(|(_, v)| v.clone()).collect();
    let pred = model.predict_many(&rows);
    let mut best = 0;
    for j in 1..encoded.len() {
        let better = match pred[j].total_cmp(&pred[best]) {
            Ordering::Greater => true,
            Ordering::Equal => lexicographic(&encoded[j].1, &encoded[best].1) == Ordering::Less,
            Ordering::Less => false,
        };
        if better {
            best = j;
        }
    }
    Ok((candidates[encoded[best].0].clone(), pred[best]))
}

pub fn feature_importances(model: &ForestModel) -> Vec<(String, f64)> {
    model.feature_importances()
}

/// A fitted forest together with the encoding it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommender {
    pub format: String,
    pub encoder: Encoder,
    pub feature_names: Vec<String>,
    pub training_datasets: Vec<String>,
    pub forest: ForestModel,
}

const MODEL_FORMAT: &str = "autoer-forest/1";

impl Recommender {
    /// Tunes the forest on a stratified hold-out, then refits on all instances.
    pub fn train(instances: &InstanceSet, seed: u64, opts: ForestTuningOptions) -> Result<(Self, ForestTuning)> {
        let encoder = Encoder::new(&instances.embedders());
        let tuning = tune_forest(instances, &encoder, seed, opts)?;
        let (x, y) = instances.matrix(&encoder, false)?;
        let names = encoder.feature_names();
        let forest = fit_forest(&x, &y, names.clone(), tuning.best)?;
        Ok((
            Self {
                format: MODEL_FORMAT.into(),
                encoder,
                feature_names: names,
                training_datasets: instances.datasets(),
                forest,
            },
            tuning,
        ))
    }

    pub fn recommend(&self, features: &DatasetFeatures, candidates: &[PipelineConfig]) -> Result<(PipelineConfig, f64)> {
        recommend(&self.forest, &self.encoder, &features.to_vec(false), candidates)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::parse("model", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Recommender =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::parse(
                path.display().to_string(),
                format!("unsupported model format {:?}", model.format),
            ));
        }
        Ok(model)
    }
}

/// Configurations the recommender chooses from: the grid, the distinct
/// configurations among the training instances, or both.
pub fn candidate_configs(mode: GenerationMode, space: &SearchSpace, training: &InstanceSet) -> Vec<PipelineConfig> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut add = |c: &PipelineConfig| {
        if seen.insert(c.key()) {
            out.push(c.clone());
        }
    };
    if matches!(mode, GenerationMode::Grid | GenerationMode::All) {
        space.grid().iter().for_each(&mut add);
    }
    if matches!(mode, GenerationMode::Sampling | GenerationMode::All) {
        training.instances().iter().for_each(|i| add(&i.config));
    }
    out
}

#[derive(Debug, Clone)]
pub struct LodoOptions {
    pub generation: GenerationOptions,
    pub tuning: ForestTuningOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodoReport {
    pub dataset: String,
    pub config: PipelineConfig,
    pub predicted_f1: f64,
    /// F1 of the recommended configuration actually run on the target.
    pub actual_f1: Option<f64>,
    pub n_train_instances: usize,
    pub params: ForestParams,
    /// Importances of the model trained for this fold.
    pub importances: Vec<(String, f64)>,
    pub generation_s: f64,
    pub train_s: f64,
    pub predict_s: f64,
    pub pipeline_s: f64,
}

/// Instances of every bundle, keyed by dataset name, with generation times.
pub fn instances_by_dataset(
    bundles: &[&DatasetBundle],
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    opts: &GenerationOptions,
) -> Result<BTreeMap<String, (InstanceSet, f64)>> {
    let mut out = BTreeMap::new();
    for b in bundles {
        let t = Instant::now();
        let set = dataset_instances(b, mode, registry, opts)?;
        if out.insert(b.name.clone(), (set, t.elapsed().as_secs_f64())).is_some() {
            return Err(Error::InvalidArgument(format!("dataset name {} used twice", b.name)));
        }
    }
    Ok(out)
}

/// Leave-one-dataset-out: for every bundle, trains on the others and runs
/// the recommended configuration on it.
pub fn lodo_evaluate(
    bundles: &[&DatasetBundle],
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    opts: &LodoOptions,
) -> Result<Vec<LodoReport>> {
    if bundles.len() < 2 {
        return Err(Error::InvalidArgument("leave-one-dataset-out needs at least two datasets".into()));
    }
    let per_dataset = instances_by_dataset(bundles, mode, registry, &opts.generation)?;
    lodo_from_instances(bundles, &per_dataset, mode, registry, opts)
}

/// As [`lodo_evaluate`], with the per-dataset instances already generated.
pub fn lodo_from_instances(
    bundles: &[&DatasetBundle],
    per_dataset: &BTreeMap<String, (InstanceSet, f64)>,
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    opts: &LodoOptions,
) -> Result<Vec<LodoReport>> {
    let mut reports = Vec::with_capacity(bundles.len());
    for target in bundles {
        let mut train = InstanceSet::new();
        let mut generation_s = 0.0;
        for b in bundles.iter().filter(|b| b.name != target.name) {
            let (set, secs) = per_dataset
                .get(&b.name)
                .ok_or_else(|| Error::InvalidArgument(format!("no instances for {}", b.name)))?;
            train.extend(set.clone());
            generation_s += secs;
        }
        let t = Instant::now();
        let (model, tuning) = Recommender::train(&train, opts.seed, opts.tuning)?;
        let train_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let features = profile_dataset(&target.e1, &target.e2)?;
        let candidates = candidate_configs(mode, &opts.generation.space, &train);
        let (config, predicted_f1) = model.recommend(&features, &candidates)?;
        let predict_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let run = run_pipeline(target, &config, registry)?;
        let pipeline_s = t.elapsed().as_secs_f64();
        reports.push(LodoReport {
            dataset: target.name.clone(),
            config,
            predicted_f1,
            actual_f1: run.metrics.map(|m| m.f1),
            n_train_instances: train.len(),
            params: tuning.best,
            importances: model.forest.feature_importances(),
            generation_s,
            train_s,
            predict_s,
            pipeline_s,
        });
    }
    Ok(reports)
}
