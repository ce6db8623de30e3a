use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use autoer::datamodel::{Clustering, PipelineConfig};
use autoer::embed::EmbedderRegistry;
use autoer::ingest::DatasetBundle;
use autoer::pipeline::{run_pipeline, Metrics, PreparedDataset, Timings};
use autoer::predict::{
    candidate_configs, instances_by_dataset, lodo_from_instances, ForestTuningOptions, GenerationMode,
    GenerationOptions, InstanceSet, LodoOptions, Recommender,
};
use autoer::profile::profile_dataset;
use autoer::tune::report::{curves, load_logs, mean_curves, write_csv};
use autoer::tune::{grid_search, tune as tune_study, SamplerKind, SearchSpace, Trial, TrialLog, TuneOptions};

use crate::manifest::{DatasetEntry, Manifest, SyntheticEntry};
use crate::{Common, UsageError};

const DEFAULT_OUTPUT: &str = "runs";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// The manifest with the ad-hoc flags of `common` applied.
fn study(common: &Common) -> Result<Manifest> {
    let mut m = match &common.manifest {
        Some(p) => Manifest::load(p)?,
        None => Manifest::default(),
    };
    if let (Some(e1), Some(e2)) = (&common.e1, &common.e2) {
        m.datasets.push(DatasetEntry {
            name: common.name.clone(),
            e1: e1.clone(),
            e2: e2.clone(),
            gt: common.gt.clone(),
            id_column: common.id_column.clone(),
        });
    }
    for s in &common.synthetic {
        let parts: Vec<&str> = s.split(':').collect();
        let parsed = match parts.as_slice() {
            [name, size] => size.parse().ok().map(|n| (name, n, 0)),
            [name, size, seed] => size.parse().ok().zip(seed.parse().ok()).map(|(n, s)| (name, n, s)),
            _ => None,
        };
        let (name, size, seed) = parsed.ok_or_else(|| usage(format!("--synthetic expects NAME:SIZE[:SEED], got {s}")))?;
        m.synthetic.push(SyntheticEntry {
            name: name.to_string(),
            size,
            seed,
        });
    }
    for e in &common.embedding {
        let (name, path) = e
            .split_once('=')
            .ok_or_else(|| usage(format!("--embedding expects NAME=PATH, got {e}")))?;
        m.embedders.insert(name.to_string(), PathBuf::from(path));
    }
    if !common.embedders.is_empty() {
        m.space.get_or_insert_with(Default::default).embedders = Some(common.embedders.clone());
    }
    if let Some(out) = &common.out {
        m.output_dir = Some(out.clone());
    }
    Ok(m)
}

/// Creates `<parent>/<name>`, where the name defaults to the command and a time stamp.
fn run_dir(parent: Option<&Path>, run_name: Option<&str>, command: &str) -> Result<PathBuf> {
    let parent = parent.unwrap_or(Path::new(DEFAULT_OUTPUT));
    let dir = match run_name {
        Some(name) => parent.join(name),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let base = parent.join(format!("{command}-{stamp}"));
            let mut dir = base.clone();
            let mut i = 2;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{i}", base.display()));
                i += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_gt(bundles: &[DatasetBundle]) -> Result<Vec<&DatasetBundle>> {
    let out: Vec<&DatasetBundle> = bundles.iter().filter(|b| b.gt.as_ref().is_some_and(|g| !g.is_empty())).collect();
    if out.is_empty() {
        bail!(usage("this command needs at least one dataset with ground truth"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ProfileRow {
    dataset: String,
    #[serde(rename = "F1")]
    f1: f64,
    #[serde(rename = "F2")]
    f2: f64,
    #[serde(rename = "F3")]
    f3: f64,
    #[serde(rename = "F4")]
    f4: f64,
    #[serde(rename = "F5")]
    f5: f64,
    #[serde(rename = "F6")]
    f6: f64,
    #[serde(rename = "F7")]
    f7: f64,
    #[serde(rename = "F8")]
    f8: f64,
    #[serde(rename = "F9")]
    f9: f64,
    #[serde(rename = "F10")]
    f10: f64,
    #[serde(rename = "F11")]
    f11: f64,
    #[serde(rename = "F12")]
    f12: f64,
    #[serde(rename = "F10_alt", skip_serializing_if = "Option::is_none")]
    f10_alt: Option<f64>,
}

pub fn profile(common: &Common, alt_f10: bool) -> Result<()> {
    let m = study(common)?;
    let bundles = m.bundles(false)?;
    let mut rows = Vec::new();
    for b in &bundles {
        let f = profile_dataset(&b.e1, &b.e2)?;
        let v = f.to_vec(false);
        rows.push(ProfileRow {
            dataset: b.name.clone(),
            f1: v[0],
            f2: v[1],
            f3: v[2],
            f4: v[3],
            f5: v[4],
            f6: v[5],
            f7: v[6],
            f8: v[7],
            f9: v[8],
            f10: v[9],
            f11: v[10],
            f12: v[11],
            f10_alt: alt_f10.then_some(f.f10_alt_missing_slots),
        });
        println!("{}: {:?}", b.name, v);
    }
    let dir = run_dir(m.output_dir.as_deref(), common.run_name.as_deref(), "profile")?;
    write_json(&rows, &dir.join("features.json"))?;
    write_csv(&rows, &dir.join("features.csv"))?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub struct ConfigArgs {
    pub config: Option<String>,
    pub default_config: bool,
    pub embedder: Option<String>,
    pub k: Option<usize>,
    pub clustering: Option<String>,
    pub threshold: Option<f64>,
}

fn parse_clustering(s: &str) -> Result<Clustering> {
    s.parse().map_err(|e: autoer::Error| usage(e.to_string()))
}

impl ConfigArgs {
    /// Starts from (st5, 10, UMC, 0.5) or `--config`, then applies single-field flags.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default_config();
        if let Some(s) = &self.config {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            let [e, k, c, t] = parts.as_slice() else {
                bail!(usage(format!("--config expects EMBEDDER,K,CLUSTERING,THRESHOLD, got {s}")));
            };
            let k = k.parse().map_err(|_| usage(format!("bad k {k}")))?;
            let t = t.parse().map_err(|_| usage(format!("bad threshold {t}")))?;
            cfg = PipelineConfig::new(e, k, parse_clustering(c)?, t);
        }
        if let Some(e) = &self.embedder {
            cfg = PipelineConfig::new(e, cfg.k, cfg.clustering, cfg.threshold);
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(c) = &self.clustering {
            cfg.clustering = parse_clustering(c)?;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if self.default_config && cfg != PipelineConfig::default_config() {
            bail!(usage("--default-config cannot be combined with other configuration flags"));
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct ClusterIds {
    e1: Vec<String>,
    e2: Vec<String>,
}

#[derive(Serialize)]
struct RunOutput {
    dataset: String,
    config: PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    timings: Timings,
    clusters: Vec<ClusterIds>,
}

pub fn run(common: &Common, config: ConfigArgs, no_gt: bool) -> Result<()> {
    let cfg = config.resolve()?;
    let m = study(common)?;
    let registry = m.registry()?;
    let bundles = m.bundles(!no_gt)?;
    let dir = run_dir(m.output_dir.as_deref(), common.run_name.as_deref(), "run")?;
    for b in &bundles {
        let res = run_pipeline(b, &cfg, &registry)?;
        let clusters = res
            .clusters
            .matched()
            .map(|c| ClusterIds {
                e1: c.left.iter().map(|&i| b.e1.get(i as usize).id.clone()).collect(),
                e2: c.right.iter().map(|&i| b.e2.get(i as usize).id.clone()).collect(),
            })
            .collect::<Vec<_>>();
        match &res.metrics {
            Some(mt) => println!(
                "{}: {cfg} P={:.4} R={:.4} F1={:.4}, {} clusters",
                b.name,
                mt.precision,
                mt.recall,
                mt.f1,
                clusters.len()
            ),
            None => println!("{}: {cfg} {} clusters", b.name, clusters.len()),
        }
        let out = RunOutput {
            dataset: b.name.clone(),
            config: cfg.clone(),
            metrics: res.metrics,
            timings: res.timings,
            clusters,
        };
        write_json(&out, &dir.join(format!("{}.run.json", b.name)))?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct Best {
    sampler: String,
    trial: Trial,
}

fn best_of<'a>(logs: impl Iterator<Item = &'a TrialLog>) -> BTreeMap<String, Best> {
    let mut best: BTreeMap<String, Best> = BTreeMap::new();
    for log in logs {
        if let Some(t) = log.best() {
            let better = best.get(&log.dataset).map_or(true, |b| t.f1 > b.trial.f1);
            if better {
                best.insert(
                    log.dataset.clone(),
                    Best {
                        sampler: log.sampler.clone(),
                        trial: t.clone(),
                    },
                );
            }
        }
    }
    best
}

fn log_path(dir: &Path, dataset: &str, sampler: &str, seed: Option<u64>) -> PathBuf {
    match seed {
        Some(s) => dir.join(format!("{dataset}__{sampler}__seed{s}.jsonl")),
        None => dir.join(format!("{dataset}__{sampler}.jsonl")),
    }
}

fn write_curves(dir: &Path) -> Result<()> {
    let logs = load_logs(dir)?;
    let rows = curves(&logs);
    write_csv(&rows, &dir.join("curves.csv"))?;
    write_csv(&mean_curves(&rows), &dir.join("mean_curves.csv"))?;
    Ok(())
}

fn run_grid(bundles: &[&DatasetBundle], registry: &EmbedderRegistry, space: &SearchSpace, dir: &Path) -> Result<()> {
    let mut logs = Vec::new();
    for b in bundles {
        let prepared = PreparedDataset::new(b, registry, space.k_max)?;
        let log = grid_search(&prepared, space)?;
        log.write(&log_path(dir, &b.name, "grid", None))?;
        if let Some(t) = log.best() {
            println!("{}: grid best {} F1={:.4} over {} points", b.name, t.config, t.f1, log.len());
        }
        logs.push(log);
    }
    write_json(&best_of(logs.iter()), &dir.join("best.json"))
}

pub fn grid(common: &Common) -> Result<()> {
    let m = study(common)?;
    let registry = m.registry()?;
    let space = m.space()?;
    let bundles = m.bundles(true)?;
    let dir = run_dir(m.output_dir.as_deref(), common.run_name.as_deref(), "grid")?;
    run_grid(&with_gt(&bundles)?, &registry, &space, &dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn tune(
    common: &Common,
    sampler: Option<String>,
    budget: Option<usize>,
    seeds: Option<u64>,
    subsample: Option<f64>,
    resume: Option<PathBuf>,
) -> Result<()> {
    let m = study(common)?;
    let registry = m.registry()?;
    let space = m.space()?;
    let bundles = m.bundles(true)?;
    let bundles = with_gt(&bundles)?;
    let sampler_name = sampler.or(m.sampler.clone()).unwrap_or_else(|| "tpe".into());
    let dir = match &resume {
        Some(d) if d.is_dir() => d.clone(),
        Some(d) => bail!(usage(format!("resume directory {} does not exist", d.display()))),
        None => run_dir(m.output_dir.as_deref(), common.run_name.as_deref(), "tune")?,
    };
    if sampler_name == "grid" {
        if seeds.is_some() {
            eprintln!("note: grid search is deterministic, --seeds is ignored");
        }
        run_grid(&bundles, &registry, &space, &dir)?;
        println!("wrote {}", dir.display());
        return Ok(());
    }
    let kind: SamplerKind = sampler_name.parse().map_err(|e: autoer::Error| usage(e.to_string()))?;
    let budget = budget.or(m.budget).unwrap_or(100);
    let seeds: Vec<u64> = match seeds {
        Some(n) => (0..n).collect(),
        None => m.seeds.clone().unwrap_or_else(|| (0..5).collect()),
    };
    if seeds.is_empty() {
        bail!(usage("at least one seed is needed"));
    }
    let subsample = subsample.or(m.subsample).unwrap_or(1.0);
    let s = kind.build();
    let mut logs = Vec::new();
    for b in &bundles {
        let prepared = PreparedDataset::new(b, &registry, space.k_max)?;
        for &seed in &seeds {
            let path = log_path(&dir, &b.name, kind.name(), Some(seed));
            let previous = if resume.is_some() && path.exists() {
                Some(TrialLog::read(&path)?)
            } else {
                None
            };
            let opts = TuneOptions {
                budget,
                seed,
                subsample,
            };
            let log = tune_study(&prepared, &space, s.as_ref(), opts, previous).map_err(|e| match e {
                autoer::Error::InvalidArgument(msg) => usage(msg),
                other => other.into(),
            })?;
            log.write(&path)?;
            if let Some(t) = log.best() {
                println!("{} {} seed {seed}: best {} F1={:.4} at trial {}", b.name, kind, t.config, t.f1, t.number);
            }
            logs.push(log);
        }
    }
    write_json(&best_of(logs.iter()), &dir.join("best.json"))?;
    write_curves(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub struct RecommendArgs {
    pub mode: Option<String>,
    pub target: Option<String>,
    pub model: Option<PathBuf>,
    pub instances: Option<PathBuf>,
    pub seed: Option<u64>,
    pub forest_trials: Option<usize>,
    pub budget: Option<usize>,
    pub seeds: Option<u64>,
}

#[derive(Serialize)]
struct Recommendation {
    dataset: String,
    config: PipelineConfig,
    predicted_f1: f64,
    actual_f1: Option<f64>,
    training_datasets: Vec<String>,
}

#[derive(Serialize)]
struct LodoRow {
    dataset: String,
    embedder: String,
    k: usize,
    clustering: Clustering,
    threshold: f64,
    predicted_f1: f64,
    actual_f1: Option<f64>,
    n_train_instances: usize,
    generation_s: f64,
    train_s: f64,
    predict_s: f64,
    pipeline_s: f64,
}

#[derive(Serialize)]
struct ImportanceRow {
    model: String,
    feature: String,
    importance: f64,
}

/// Instances of `bundles`, read from `cache` when it exists and written to it otherwise.
fn training_instances(
    bundles: &[&DatasetBundle],
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    gen: &GenerationOptions,
    cache: Option<&Path>,
    dir: &Path,
) -> Result<BTreeMap<String, (InstanceSet, f64)>> {
    if let Some(path) = cache.filter(|p| p.exists()) {
        let all = InstanceSet::read_csv(path)?;
        let mut out = BTreeMap::new();
        for b in bundles {
            let set = all.filter(|i| i.dataset == b.name);
            if set.is_empty() {
                bail!(usage(format!("{} has no instances for {}", path.display(), b.name)));
            }
            out.insert(b.name.clone(), (set, 0.0));
        }
        return Ok(out);
    }
    let per = instances_by_dataset(bundles, mode, registry, gen)?;
    let mut all = InstanceSet::new();
    per.values().for_each(|(s, _)| all.extend(s.clone()));
    all.write_csv(&dir.join("instances.csv"))?;
    if let Some(path) = cache {
        all.write_csv(path)?;
    }
    Ok(per)
}

pub fn recommend(common: &Common, args: RecommendArgs) -> Result<()> {
    let m = study(common)?;
    let registry = m.registry()?;
    let space = m.space()?;
    let mode: GenerationMode = args
        .mode
        .or(m.mode.clone())
        .unwrap_or_else(|| "grid".into())
        .parse()
        .map_err(|e: autoer::Error| usage(e.to_string()))?;
    let mut gen = GenerationOptions::new(space.clone());
    gen.budget = args.budget.or(m.budget).unwrap_or(100);
    gen.seeds = match args.seeds {
        Some(n) => (0..n).collect(),
        None => m.seeds.clone().unwrap_or_else(|| (0..5).collect()),
    };
    let tuning = ForestTuningOptions {
        n_trials: args.forest_trials.or(m.forest_trials).unwrap_or(50),
        ..Default::default()
    };
    let seed = args.seed.or(m.seed).unwrap_or(0);
    let bundles = m.bundles(true)?;
    let dir = run_dir(m.output_dir.as_deref(), common.run_name.as_deref(), "recommend")?;

    let Some(target_name) = args.target else {
        let labelled = with_gt(&bundles)?;
        if labelled.len() < 2 {
            bail!(usage("leave-one-dataset-out needs at least two datasets with ground truth"));
        }
        let per = training_instances(&labelled, mode, &registry, &gen, args.instances.as_deref(), &dir)?;
        let opts = LodoOptions {
            generation: gen,
            tuning,
            seed,
        };
        let reports = lodo_from_instances(&labelled, &per, mode, &registry, &opts)?;
        let mut rows = Vec::new();
        let mut importances = Vec::new();
        for r in &reports {
            println!(
                "{}: {} predicted F1={:.4} actual F1={}",
                r.dataset,
                r.config,
                r.predicted_f1,
                r.actual_f1.map_or("-".into(), |f| format!("{f:.4}"))
            );
            rows.push(LodoRow {
                dataset: r.dataset.clone(),
                embedder: r.config.embedder.clone(),
                k: r.config.k,
                clustering: r.config.clustering,
                threshold: r.config.threshold,
                predicted_f1: r.predicted_f1,
                actual_f1: r.actual_f1,
                n_train_instances: r.n_train_instances,
                generation_s: r.generation_s,
                train_s: r.train_s,
                predict_s: r.predict_s,
                pipeline_s: r.pipeline_s,
            });
            importances.extend(r.importances.iter().map(|(f, v)| ImportanceRow {
                model: format!("without {}", r.dataset),
                feature: f.clone(),
                importance: *v,
            }));
        }
        write_json(&reports, &dir.join("lodo.json"))?;
        write_csv(&rows, &dir.join("lodo.csv"))?;
        write_csv(&importances, &dir.join("importances.csv"))?;
        println!("wrote {}", dir.display());
        return Ok(());
    };

    let target = bundles
        .iter()
        .find(|b| b.name == target_name)
        .ok_or_else(|| usage(format!("no dataset named {target_name}")))?;
    let training: Vec<&DatasetBundle> = bundles
        .iter()
        .filter(|b| b.name != target_name && b.gt.as_ref().is_some_and(|g| !g.is_empty()))
        .collect();
    let reuse = args.model.as_deref().filter(|p| p.exists());
    let needs_instances = reuse.is_none() || mode != GenerationMode::Grid;
    let instances = if needs_instances {
        if training.is_empty() {
            bail!(usage("no training datasets with ground truth besides the target"));
        }
        let per = training_instances(&training, mode, &registry, &gen, args.instances.as_deref(), &dir)?;
        let mut all = InstanceSet::new();
        per.into_values().for_each(|(s, _)| all.extend(s));
        all
    } else {
        InstanceSet::new()
    };
    let model = match reuse {
        Some(path) => {
            println!("reusing model {}", path.display());
            Recommender::load(path)?
        }
        None => {
            let (model, t) = Recommender::train(&instances, seed, tuning)?;
            println!("trained on {} instances, validation MSE {:.6}", instances.len(), t.best_mse);
            if let Some(path) = &args.model {
                model.save(path)?;
            }
            model
        }
    };
    model.save(&dir.join("model.json"))?;
    let importances: Vec<ImportanceRow> = model
        .forest
        .feature_importances()
        .into_iter()
        .map(|(feature, importance)| ImportanceRow {
            model: "model".into(),
            feature,
            importance,
        })
        .collect();
    write_csv(&importances, &dir.join("importances.csv"))?;

    let features = profile_dataset(&target.e1, &target.e2)?;
    let candidates = candidate_configs(mode, &space, &instances);
    let (config, predicted_f1) = model.recommend(&features, &candidates)?;
    let run = run_pipeline(target, &config, &registry)?;
    let rec = Recommendation {
        dataset: target.name.clone(),
        config,
        predicted_f1,
        actual_f1: run.metrics.map(|mt| mt.f1),
        training_datasets: model.training_datasets.clone(),
    };
    println!(
        "{}: {} predicted F1={:.4} actual F1={}",
        rec.dataset,
        rec.config,
        rec.predicted_f1,
        rec.actual_f1.map_or("-".into(), |f| format!("{f:.4}"))
    );
    write_json(&rec, &dir.join("recommendation.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn report(logs: &Path, out: Option<PathBuf>, run_name: Option<String>) -> Result<()> {
    if !logs.is_dir() {
        bail!(usage(format!("{} is not a directory", logs.display())));
    }
    let loaded = load_logs(logs).map_err(|e| match e {
        autoer::Error::InvalidArgument(msg) => usage(msg),
        other => other.into(),
    })?;
    let rows = curves(&loaded);
    let means = mean_curves(&rows);
    let dir = run_dir(out.as_deref(), run_name.as_deref(), "report")?;
    write_csv(&rows, &dir.join("curves.csv"))?;
    write_csv(&means, &dir.join("mean_curves.csv"))?;
    println!("{} logs, {} curve rows", loaded.len(), rows.len());
    println!("wrote {}", dir.display());
    Ok(())
}
