//! Study manifests: datasets, embedders, search space and study settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use autoer::datamodel::Clustering;
use autoer::embed::{EmbedderRegistry, EmbeddingTable, BUILTIN_EMBEDDERS};
use autoer::ingest::{load_collection, load_ground_truth, validate_bundle, DatasetBundle, Format};
use autoer::synth::{generate, SynthConfig};
use autoer::tune::SearchSpace;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub output_dir: Option<PathBuf>,
    pub sampler: Option<String>,
    pub budget: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub mode: Option<String>,
    /// Seed of the recommender (forest tuning and fitting).
    pub seed: Option<u64>,
    pub subsample: Option<f64>,
    pub forest_trials: Option<usize>,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub synthetic: Vec<SyntheticEntry>,
    /// Embedder name → vector file.
    #[serde(default)]
    pub embedders: BTreeMap<String, PathBuf>,
    pub space: Option<SpaceOverride>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub e1: PathBuf,
    pub e2: PathBuf,
    pub gt: Option<PathBuf>,
    #[serde(default = "default_id")]
    pub id_column: String,
}

fn default_id() -> String {
    "id".into()
}

/// A generated dataset with planted duplicates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEntry {
    pub name: String,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceOverride {
    pub embedders: Option<Vec<String>>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub k_step: Option<usize>,
    pub clustering: Option<Vec<Clustering>>,
    pub threshold_low: Option<f64>,
    pub threshold_high: Option<f64>,
    pub threshold_grid: Option<Vec<f64>>,
}

impl Manifest {
    /// Reads a TOML manifest; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: Manifest =
            toml::from_str(&text).map_err(|e| UsageError(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut m.datasets {
            resolve(&mut d.e1);
            resolve(&mut d.e2);
            if let Some(gt) = &mut d.gt {
                resolve(gt);
            }
        }
        m.embedders.values_mut().for_each(resolve);
        if let Some(out) = &mut m.output_dir {
            resolve(out);
        }
        Ok(m)
    }

    /// Built-in embedders plus every vector file of the manifest.
    pub fn registry(&self) -> Result<EmbedderRegistry> {
        let mut registry = EmbedderRegistry::with_builtins();
        for (name, path) in &self.embedders {
            if !path.exists() {
                return Err(UsageError(format!("embedding file {} does not exist", path.display())).into());
            }
            registry.register_table(EmbeddingTable::load(path, name)?);
        }
        Ok(registry)
    }

    /// Default embedders are the manifest's vector files, or the built-in
    /// hashed embedders when there are none.
    pub fn space(&self) -> Result<SearchSpace> {
        let default_names: Vec<String> = if self.embedders.is_empty() {
            BUILTIN_EMBEDDERS.iter().map(|(n, _)| n.to_string()).collect()
        } else {
            self.embedders.keys().cloned().collect()
        };
        let o = self.space.clone().unwrap_or_default();
        let names = o.embedders.unwrap_or(default_names);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut space = SearchSpace::new(&refs);
        if let Some(v) = o.k_min {
            space.k_min = v;
        }
        if let Some(v) = o.k_max {
            space.k_max = v;
        }
        if let Some(v) = o.k_step {
            space.k_step = v;
        }
        if let Some(v) = o.clustering {
            space.clustering = v;
        }
        if let Some(v) = o.threshold_low {
            space.threshold_low = v;
        }
        if let Some(v) = o.threshold_high {
            space.threshold_high = v;
        }
        if let Some(v) = o.threshold_grid {
            space.threshold_grid = v;
        }
        space.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(space)
    }

    /// Loads every dataset, files first, then synthetic ones.
    pub fn bundles(&self, with_gt: bool) -> Result<Vec<DatasetBundle>> {
        let mut out = Vec::new();
        for d in &self.datasets {
            out.push(load_dataset(d, with_gt)?);
        }
        for s in &self.synthetic {
            let mut b = generate(&SynthConfig::sized(&s.name, s.size, s.seed))?;
            if !with_gt {
                b.gt = None;
            }
            out.push(b);
        }
        let mut names: Vec<&str> = out.iter().map(|b| b.name.as_str()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            bail!(UsageError(format!("dataset name {} used twice", w[0])));
        }
        if out.is_empty() {
            bail!(UsageError("no datasets given; use a manifest or --e1/--e2".into()));
        }
        Ok(out)
    }
}

fn load_dataset(d: &DatasetEntry, with_gt: bool) -> Result<DatasetBundle> {
    for p in [Some(&d.e1), Some(&d.e2), d.gt.as_ref()].into_iter().flatten() {
        if !p.exists() {
            bail!(UsageError(format!("file {} does not exist", p.display())));
        }
    }
    let e1 = load_collection(&d.e1, Format::from_path(&d.e1), &d.id_column, "E1")
        .with_context(|| format!("loading E1 of {}", d.name))?;
    let e2 = load_collection(&d.e2, Format::from_path(&d.e2), &d.id_column, "E2")
        .with_context(|| format!("loading E2 of {}", d.name))?;
    let gt = match (&d.gt, with_gt) {
        (Some(p), true) => {
            let loaded = load_ground_truth(p, Some((&e1, &e2)))?;
            if loaded.duplicates > 0 {
                eprintln!("{}: {} duplicate ground-truth rows collapsed", d.name, loaded.duplicates);
            }
            let report = validate_bundle(&e1, &e2, Some(&loaded.gt));
            for w in &report.warnings {
                eprintln!("{}: warning: {}", d.name, w.detail);
            }
            if let Some(v) = report.violations.first() {
                bail!(UsageError(format!("{}: {}", d.name, v.detail)));
            }
            Some(loaded.gt)
        }
        _ => None,
    };
    Ok(DatasetBundle::new(&d.name, e1, e2, gt)?)
}
