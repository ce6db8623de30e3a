//! Training instances: one evaluated configuration on one dataset.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encoding::Encoder;
use crate::datamodel::{Clustering, PipelineConfig};
use crate::embed::EmbedderRegistry;
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::pipeline::PreparedDataset;
use crate::profile::{profile_dataset, DatasetFeatures};
use crate::tune::{grid_search, tune, SamplerKind, SearchSpace, TuneOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub dataset: String,
    pub features: DatasetFeatures,
    pub config: PipelineConfig,
    /// Achieved F1, in (0, 1].
    pub label: f64,
}

/// Instances without duplicate (dataset, configuration) pairs, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet {
    instances: Vec<Instance>,
    seen: HashSet<(String, (String, usize, Clustering, u64))>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    dataset: String,
    #[serde(rename = "F1")]
    f1_entities: f64,
    #[serde(rename = "F2")]
    f2_attributes: f64,
    #[serde(rename = "F3")]
    f3_distinct_values: f64,
    #[serde(rename = "F4")]
    f4_av_pairs: f64,
    #[serde(rename = "F5")]
    f5_mean_profile_size: f64,
    #[serde(rename = "F6")]
    f6_mean_attribute_size: f64,
    #[serde(rename = "F7")]
    f7_mean_distinct_entity_values: f64,
    #[serde(rename = "F8")]
    f8_mean_distinct_attribute_values: f64,
    #[serde(rename = "F9")]
    f9_max_profile_size: f64,
    #[serde(rename = "F10")]
    f10_missing_information: f64,
    #[serde(rename = "F11")]
    f11_mean_value_tokens: f64,
    #[serde(rename = "F12")]
    f12_mean_value_length: f64,
    #[serde(rename = "F10_alt")]
    f10_alt_missing_slots: f64,
    embedder: String,
    k: usize,
    clustering: Clustering,
    threshold: f64,
    f1: f64,
}

impl InstanceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Adds `inst` unless its label is zero or its (dataset, config) is
    /// already present. Returns whether it was added.
    pub fn push(&mut self, inst: Instance) -> bool {
        if !(inst.label > 0.0) {
            return false;
        }
        if !self.seen.insert((inst.dataset.clone(), inst.config.key())) {
            return false;
        }
        self.instances.push(inst);
        true
    }

    pub fn extend(&mut self, other: InstanceSet) {
        for i in other.instances {
            self.push(i);
        }
    }

    /// Dataset names in first-appearance order.
    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for i in &self.instances {
            if out.last() != Some(&i.dataset) && !out.contains(&i.dataset) {
                out.push(i.dataset.clone());
            }
        }
        out
    }

    pub fn filter(&self, mut keep: impl FnMut(&Instance) -> bool) -> InstanceSet {
        let mut out = InstanceSet::new();
        for i in &self.instances {
            if keep(i) {
                out.push(i.clone());
            }
        }
        out
    }

    /// Every embedder name used by any instance.
    pub fn embedders(&self) -> Vec<String> {
        let mut names: Vec<String> = self.instances.iter().map(|i| i.config.embedder.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Encoded rows and labels.
    pub fn matrix(&self, encoder: &Encoder, alt_f10: bool) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut x = Vec::with_capacity(self.len());
        let mut y = Vec::with_capacity(self.len());
        for i in &self.instances {
            let row = encoder.encode(&i.features.to_vec(alt_f10), &i.config).ok_or_else(|| {
                Error::InvalidConfig(format!("embedder {} missing from the encoding", i.config.embedder))
            })?;
            x.push(row);
            y.push(i.label);
        }
        Ok((x, y))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ctx = path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(&ctx, e))?;
        for i in &self.instances {
            let f = &i.features;
            w.serialize(Row {
                dataset: i.dataset.clone(),
                f1_entities: f.f1_entities,
                f2_attributes: f.f2_attributes,
                f3_distinct_values: f.f3_distinct_values,
                f4_av_pairs: f.f4_av_pairs,
                f5_mean_profile_size: f.f5_mean_profile_size,
                f6_mean_attribute_size: f.f6_mean_attribute_size,
                f7_mean_distinct_entity_values: f.f7_mean_distinct_entity_values,
                f8_mean_distinct_attribute_values: f.f8_mean_distinct_attribute_values,
                f9_max_profile_size: f.f9_max_profile_size,
                f10_missing_information: f.f10_missing_information,
                f11_mean_value_tokens: f.f11_mean_value_tokens,
                f12_mean_value_length: f.f12_mean_value_length,
                f10_alt_missing_slots: f.f10_alt_missing_slots,
                embedder: i.config.embedder.clone(),
                k: i.config.k,
                clustering: i.config.clustering,
                threshold: i.config.threshold,
                f1: i.label,
            })
            .map_err(|e| Error::parse(&ctx, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let ctx = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(&ctx, e))?;
        let mut out = InstanceSet::new();
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| Error::parse(&ctx, e))?;
            out.push(Instance {
                dataset: row.dataset,
                features: DatasetFeatures {
                    f1_entities: row.f1_entities,
                    f2_attributes: row.f2_attributes,
                    f3_distinct_values: row.f3_distinct_values,
                    f4_av_pairs: row.f4_av_pairs,
                    f5_mean_profile_size: row.f5_mean_profile_size,
                    f6_mean_attribute_size: row.f6_mean_attribute_size,
                    f7_mean_distinct_entity_values: row.f7_mean_distinct_entity_values,
                    f8_mean_distinct_attribute_values: row.f8_mean_distinct_attribute_values,
                    f9_max_profile_size: row.f9_max_profile_size,
                    f10_missing_information: row.f10_missing_information,
                    f11_mean_value_tokens: row.f11_mean_value_tokens,
                    f12_mean_value_length: row.f12_mean_value_length,
                    f10_alt_missing_slots: row.f10_alt_missing_slots,
                },
                config: PipelineConfig::new(&row.embedder, row.k, row.clustering, row.threshold),
                label: row.f1,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GenerationMode {
    Grid,
    Sampling,
    All,
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenerationMode::Grid => "grid",
            GenerationMode::Sampling => "sampling",
            GenerationMode::All => "all",
        })
    }
}

impl FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(GenerationMode::Grid),
            "sampling" => Ok(GenerationMode::Sampling),
            "all" => Ok(GenerationMode::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown instance mode {other:?} (expected grid, sampling or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    pub space: SearchSpace,
    pub samplers: Vec<SamplerKind>,
    pub budget: usize,
    pub seeds: Vec<u64>,
}

impl GenerationOptions {
    /// Four samplers, 100 trials, seeds 0..5.
    pub fn new(space: SearchSpace) -> Self {
        Self {
            space,
            samplers: SamplerKind::ALL.to_vec(),
            budget: 100,
            seeds: (0..5).collect(),
        }
    }
}

/// Evaluates configurations on one dataset and labels them with their F1.
pub fn dataset_instances(
    bundle: &DatasetBundle,
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    opts: &GenerationOptions,
) -> Result<InstanceSet> {
    if bundle.gt.as_ref().map_or(true, |g| g.is_empty()) {
        return Err(Error::EmptyGroundTruth);
    }
    let features = profile_dataset(&bundle.e1, &bundle.e2)?;
    let prepared = PreparedDataset::new(bundle, registry, opts.space.k_max)?;
    let mut out = InstanceSet::new();
    let mut add = |trials: Vec<crate::tune::Trial>| {
        for t in trials {
            out.push(Instance {
                dataset: bundle.name.clone(),
                features,
                config: t.config,
                label: t.f1,
            });
        }
    };
    if matches!(mode, GenerationMode::Grid | GenerationMode::All) {
        add(grid_search(&prepared, &opts.space)?.trials);
    }
    if matches!(mode, GenerationMode::Sampling | GenerationMode::All) {
        for kind in &opts.samplers {
            let sampler = kind.build();
            for &seed in &opts.seeds {
                add(tune(&prepared, &opts.space, sampler.as_ref(), TuneOptions::new(opts.budget, seed), None)?.trials);
            }
        }
    }
    Ok(out)
}

/// Instances for every bundle; zero-F1 and repeated configurations dropped.
pub fn generate_instances(
    bundles: &[&DatasetBundle],
    mode: GenerationMode,
    registry: &EmbedderRegistry,
    opts: &GenerationOptions,
) -> Result<InstanceSet> {
    let mut out = InstanceSet::new();
    for b in bundles {
        out.extend(dataset_instances(b, mode, registry, opts)?);
    }
    Ok(out)
}
