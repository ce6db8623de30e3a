//! Core domain types shared by every stage of the pipeline.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entity description: an id plus attribute-value pairs in read order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub id: String,
    pub attributes: Vec<(String, String)>,
}

impl EntityProfile {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            attributes: Vec::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push((name.into(), value.into()));
        self
    }
}

/// Concatenates the attribute values of `e` into a single sentence.
///
/// Attribute names are ignored. Empty values are skipped, the remaining ones
/// are joined by one space and the result is trimmed.
pub fn serialize_entity(e: &EntityProfile) -> String {
    let mut out = String::new();
    for (_, value) in &e.attributes {
        if value.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(value);
    }
    out.trim().to_string()
}

/// Ordered set of entity profiles coming from one source.
#[derive(Debug, Clone)]
pub struct EntityCollection {
    source_id: String,
    entities: Vec<EntityProfile>,
    index: HashMap<String, usize>,
}

impl EntityCollection {
    pub fn new(source_id: impl Into<String>, entities: Vec<EntityProfile>) -> Result<Self> {
        let source_id = source_id.into();
        if entities.is_empty() {
            return Err(Error::EmptyCollection(source_id));
        }
        let mut index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "entity #{i} of {source_id} has an empty id"
                )));
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    source_id,
                    id: e.id.clone(),
                });
            }
        }
        Ok(Self {
            source_id,
            entities,
            index,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn entities(&self) -> &[EntityProfile] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, i: usize) -> &EntityProfile {
        &self.entities[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|e| e.id.as_str())
    }

    /// Rank of every entity when ids are sorted lexicographically.
    pub fn lexicographic_ranks(&self) -> Vec<u32> {
        let mut order: Vec<usize> = (0..self.entities.len()).collect();
        order.sort_by(|&a, &b| self.entities[a].id.cmp(&self.entities[b].id));
        let mut ranks = vec![0u32; order.len()];
        for (rank, i) in order.into_iter().enumerate() {
            ranks[i] = rank as u32;
        }
        ranks
    }
}

/// Known matching pairs `(id in E1, id in E2)`, without duplicates, in read order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pairs: Vec<(String, String)>,
}

impl GroundTruth {
    /// Builds a ground truth, collapsing repeated pairs. Returns the number of
    /// dropped duplicates alongside.
    pub fn from_pairs<I>(pairs: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        let mut duplicates = 0;
        for pair in pairs {
            if seen.insert(pair.clone()) {
                kept.push(pair);
            } else {
                duplicates += 1;
            }
        }
        (Self { pairs: kept }, duplicates)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Names of the pre-trained language models in the configuration space.
pub const PRETRAINED_EMBEDDERS: [&str; 7] = [
    "smpnet",
    "st5",
    "sdistilroberta",
    "sminilm",
    "sent_glove",
    "fasttext",
    "word2vec",
];

/// Maps aliases of pre-trained model names onto their canonical spelling.
pub fn canonical_embedder_name(name: &str) -> String {
    match name {
        "S-GTR-T5" | "s-gtr-t5" | "gtr-t5" => "st5".to_string(),
        other => other.to_string(),
    }
}

/// Clustering algorithm applied to the pruned similarity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Clustering {
    /// Unique Mapping Clustering.
    #[serde(rename = "UMC")]
    UniqueMapping,
    /// Király Clustering.
    #[serde(rename = "KC")]
    Kiraly,
    /// Connected Components.
    #[serde(rename = "CCC")]
    ConnectedComponents,
}

impl Clustering {
    pub const ALL: [Clustering; 3] = [
        Clustering::UniqueMapping,
        Clustering::Kiraly,
        Clustering::ConnectedComponents,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Clustering::UniqueMapping => "UMC",
            Clustering::Kiraly => "KC",
            Clustering::ConnectedComponents => "CCC",
        }
    }

    pub fn ordinal(self) -> usize {
        match self {
            Clustering::UniqueMapping => 0,
            Clustering::Kiraly => 1,
            Clustering::ConnectedComponents => 2,
        }
    }
}

impl fmt::Display for Clustering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Clustering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "UMC" | "umc" | "UniqueMappingClustering" => Ok(Clustering::UniqueMapping),
            "KC" | "kc" | "KiralyClustering" => Ok(Clustering::Kiraly),
            "CCC" | "ccc" | "CC" | "ConnectedComponentsClustering" => {
                Ok(Clustering::ConnectedComponents)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown clustering algorithm {other:?} (expected UMC, KC or CCC)"
            ))),
        }
    }
}

/// One point of the configuration space: language model, k, clustering, threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub embedder: String,
    pub k: usize,
    pub clustering: Clustering,
    pub threshold: f64,
}

impl PipelineConfig {
    pub fn new(embedder: impl AsRef<str>, k: usize, clustering: Clustering, threshold: f64) -> Self {
        Self {
            embedder: canonical_embedder_name(embedder.as_ref()),
            k,
            clustering,
            threshold,
        }
    }

    /// The literature default: s-t5, k = 10, Unique Mapping Clustering, threshold 0.5.
    pub fn default_config() -> Self {
        Self::new("st5", 10, Clustering::UniqueMapping, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedder.is_empty() {
            return Err(Error::InvalidConfig("embedder name is empty".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Key used to detect duplicate configurations.
    pub fn key(&self) -> (String, usize, Clustering, u64) {
        (
            self.embedder.clone(),
            self.k,
            self.clustering,
            self.threshold.to_bits(),
        )
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.embedder, self.k, self.clustering, self.threshold
        )
    }
}

/// One cluster: entity positions in E1 (`left`) and E2 (`right`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Cluster {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }

    fn first_member(&self) -> (u8, u32) {
        match self.left.first() {
            Some(&l) => (0, l),
            None => (1, self.right.first().copied().unwrap_or(u32::MAX)),
        }
    }
}

/// Partition of E1 ∪ E2 into disjoint clusters.
///
/// Members are positions into the two collections; [`ClusterSet::resolve`]
/// turns them back into `(source_id, entity_id)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterSet {
    pub n_left: usize,
    pub n_right: usize,
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    /// Builds the canonical cluster set from the non-singleton groups; every
    /// entity not mentioned becomes a singleton.
    pub fn from_groups(n_left: usize, n_right: usize, groups: Vec<Cluster>) -> Self {
        let mut seen_left = vec![false; n_left];
        let mut seen_right = vec![false; n_right];
        let mut clusters = Vec::with_capacity(groups.len());
        for mut g in groups {
            if g.is_empty() {
                continue;
            }
            g.left.sort_unstable();
            g.right.sort_unstable();
            for &l in &g.left {
                seen_left[l as usize] = true;
            }
            for &r in &g.right {
                seen_right[r as usize] = true;
            }
            clusters.push(g);
        }
        for (i, seen) in seen_left.iter().enumerate() {
            if !seen {
                clusters.push(Cluster {
                    left: vec![i as u32],
                    right: Vec::new(),
                });
            }
        }
        for (i, seen) in seen_right.iter().enumerate() {
            if !seen {
                clusters.push(Cluster {
                    left: Vec::new(),
                    right: vec![i as u32],
                });
            }
        }
        clusters.sort_by_key(|c| c.first_member());
        Self {
            n_left,
            n_right,
            clusters,
        }
    }

    /// Clusters holding at least one entity of each side.
    pub fn matched(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters
            .iter()
            .filter(|c| !c.left.is_empty() && !c.right.is_empty())
    }

    /// Checks disjointness and coverage of both collections.
    pub fn validate(&self) -> Result<()> {
        let mut left = vec![0u32; self.n_left];
        let mut right = vec![0u32; self.n_right];
        for c in &self.clusters {
            for &l in &c.left {
                *left.get_mut(l as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!("left member {l} out of range"))
                })? += 1;
            }
            for &r in &c.right {
                *right.get_mut(r as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!("right member {r} out of range"))
                })? += 1;
            }
        }
        if let Some(i) = left.iter().position(|&n| n != 1) {
            return Err(Error::InvalidArgument(format!(
                "left entity {i} appears {} times",
                left[i]
            )));
        }
        if let Some(i) = right.iter().position(|&n| n != 1) {
            return Err(Error::InvalidArgument(format!(
                "right entity {i} appears {} times",
                right[i]
            )));
        }
        Ok(())
    }

    /// Clusters as lists of `(source_id, entity_id)`.
    pub fn resolve(
        &self,
        e1: &EntityCollection,
        e2: &EntityCollection,
    ) -> Vec<Vec<(String, String)>> {
        self.clusters
            .iter()
            .map(|c| {
                c.left
                    .iter()
                    .map(|&l| (e1.source_id().to_string(), e1.get(l as usize).id.clone()))
                    .chain(
                        c.right.iter().map(|&r| {
                            (e2.source_id().to_string(), e2.get(r as usize).id.clone())
                        }),
                    )
                    .collect()
            })
            .collect()
    }
}
