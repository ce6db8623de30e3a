//! The five pipeline steps for one configuration, and pairwise evaluation.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{build_graph, prune, run_clustering};
use crate::datamodel::{canonical_embedder_name, ClusterSet, PipelineConfig};
use crate::embed::{embed_collection, EmbedderRegistry};
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::knn::{build_index, Candidates};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub embed_s: f64,
    pub index_s: f64,
    pub query_s: f64,
    pub cluster_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub config: PipelineConfig,
    #[serde(skip)]
    pub clusters: ClusterSet,
    pub metrics: Option<Metrics>,
    pub timings: Timings,
}

/// Cross-source pairs `(E1 position, E2 position)` that share a cluster.
pub fn pairs_from_clusters(cs: &ClusterSet) -> HashSet<(u32, u32)> {
    cs.matched()
        .flat_map(|c| {
            c.left
                .iter()
                .flat_map(move |&l| c.right.iter().map(move |&r| (l, r)))
        })
        .collect()
}

/// Pairwise precision, recall and F1 against the ground-truth pairs.
pub fn evaluate(cs: &ClusterSet, gt: &[(u32, u32)]) -> Result<Metrics> {
    metrics_from_pairs(&pairs_from_clusters(cs), gt)
}

pub fn metrics_from_pairs(found: &HashSet<(u32, u32)>, gt: &[(u32, u32)]) -> Result<Metrics> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let truth: HashSet<(u32, u32)> = gt.iter().copied().collect();
    let correct = found.iter().filter(|p| truth.contains(p)).count() as f64;
    let precision = if found.is_empty() {
        0.0
    } else {
        correct / found.len() as f64
    };
    let recall = correct / truth.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
    })
}

struct Filtered {
    candidates: Candidates,
}

/// A dataset ready for repeated pipeline runs.
///
/// Embedding, indexing and querying depend only on the embedder, so their
/// output is computed once per embedder for the largest `k` seen and reused:
/// the first `k` neighbors of an exact top-`K` row are the exact top-`k` row.
pub struct PreparedDataset<'a> {
    bundle: &'a DatasetBundle,
    registry: &'a EmbedderRegistry,
    gt: Option<Vec<(u32, u32)>>,
    left_rank: Arc<[u32]>,
    right_rank: Arc<[u32]>,
    k_cap: usize,
    cache: Mutex<HashMap<String, Arc<Filtered>>>,
}

impl<'a> PreparedDataset<'a> {
    /// `k_cap` is the number of neighbors fetched per query the first time an
    /// embedder is used; larger `k` values trigger a refetch.
    pub fn new(bundle: &'a DatasetBundle, registry: &'a EmbedderRegistry, k_cap: usize) -> Result<Self> {
        let gt = bundle.indexed_ground_truth()?;
        Ok(Self {
            bundle,
            registry,
            gt,
            left_rank: bundle.e1.lexicographic_ranks().into(),
            right_rank: bundle.e2.lexicographic_ranks().into(),
            k_cap: k_cap.max(1),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn bundle(&self) -> &DatasetBundle {
        self.bundle
    }

    pub fn ground_truth(&self) -> Option<&[(u32, u32)]> {
        self.gt.as_deref()
    }

    /// Replaces the ground truth used for scoring (e.g. with a subsample).
    pub fn set_ground_truth(&mut self, gt: Option<Vec<(u32, u32)>>) {
        self.gt = gt;
    }

    fn filtered(&self, embedder: &str, k: usize, timings: &mut Timings) -> Result<Arc<Filtered>> {
        let key = canonical_embedder_name(embedder);
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            if hit.candidates.max_row_len() >= k.min(hit.candidates.n_indexed) {
                return Ok(hit.clone());
            }
        }
        let t = Instant::now();
        let m1 = embed_collection(self.registry, &key, &self.bundle.e1)?;
        let m2 = embed_collection(self.registry, &key, &self.bundle.e2)?;
        timings.embed_s += t.elapsed().as_secs_f64();
        if m1.dim() != m2.dim() {
            return Err(Error::DimensionMismatch {
                expected: m1.dim(),
                found: m2.dim(),
            });
        }
        let t = Instant::now();
        let index = build_index(m1)?;
        timings.index_s += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let candidates = index.batch_query(&m2, k.max(self.k_cap))?;
        timings.query_s += t.elapsed().as_secs_f64();
        let entry = Arc::new(Filtered { candidates });
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, entry.clone());
        Ok(entry)
    }

    /// Runs the pipeline for `cfg`; metrics are filled when ground truth exists.
    pub fn run(&self, cfg: &PipelineConfig) -> Result<RunResult> {
        cfg.validate()?;
        let start = Instant::now();
        let mut timings = Timings::default();
        let filtered = self.filtered(&cfg.embedder, cfg.k, &mut timings)?;

        let t = Instant::now();
        let candidates = filtered.candidates.truncated(cfg.k);
        timings.query_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let graph = build_graph(&candidates, self.left_rank.clone(), self.right_rank.clone());
        let pruned = prune(&graph, cfg.threshold);
        let clusters = run_clustering(cfg.clustering, &pruned);
        timings.cluster_s = t.elapsed().as_secs_f64();

        let metrics = match &self.gt {
            Some(gt) if !gt.is_empty() => Some(evaluate(&clusters, gt)?),
            _ => None,
        };
        timings.total_s = start.elapsed().as_secs_f64();
        Ok(RunResult {
            config: cfg.clone(),
            clusters,
            metrics,
            timings,
        })
    }
}

/// Embeds both collections, indexes E1, queries it with every E2 entity,
/// builds and prunes the similarity graph and clusters it.
pub fn run_pipeline(
    b: &DatasetBundle,
    cfg: &PipelineConfig,
    registry: &EmbedderRegistry,
) -> Result<RunResult> {
    PreparedDataset::new(b, registry, cfg.k)?.run(cfg)
}
