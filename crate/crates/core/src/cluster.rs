//! Similarity graph construction, threshold pruning and the three bipartite
//! clustering algorithms.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::datamodel::{Cluster, ClusterSet, Clustering};
use crate::error::{Error, Result};
use crate::knn::Candidates;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub left: u32,
    pub right: u32,
    pub weight: f64,
}

/// Weighted bipartite graph between E1 (left) and E2 (right) positions.
///
/// Each side carries the lexicographic rank of its entity ids, used to break
/// weight ties deterministically.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub n_left: usize,
    pub n_right: usize,
    pub edges: Vec<Edge>,
    left_rank: Arc<[u32]>,
    right_rank: Arc<[u32]>,
}

fn clamp_weight(w: f64) -> f64 {
    if w.is_nan() {
        0.0
    } else {
        w.clamp(0.0, 1.0)
    }
}

impl SimilarityGraph {
    /// Graph whose id order coincides with position order.
    pub fn new(n_left: usize, n_right: usize, edges: Vec<Edge>) -> Self {
        Self::with_ranks(
            edges,
            (0..n_left as u32).collect::<Vec<_>>().into(),
            (0..n_right as u32).collect::<Vec<_>>().into(),
        )
    }

    /// Builds a graph from raw edges: weights are clamped to [0, 1] and repeated
    /// pairs keep their maximum weight.
    pub fn with_ranks(edges: Vec<Edge>, left_rank: Arc<[u32]>, right_rank: Arc<[u32]>) -> Self {
        let mut best: HashMap<(u32, u32), f64> = HashMap::with_capacity(edges.len());
        let mut order = Vec::with_capacity(edges.len());
        for e in edges {
            let w = clamp_weight(e.weight);
            match best.get_mut(&(e.left, e.right)) {
                Some(cur) => *cur = cur.max(w),
                None => {
                    best.insert((e.left, e.right), w);
                    order.push((e.left, e.right));
                }
            }
        }
        let edges = order
            .into_iter()
            .map(|(left, right)| Edge {
                left,
                right,
                weight: best[&(left, right)],
            })
            .collect();
        Self {
            n_left: left_rank.len(),
            n_right: right_rank.len(),
            edges,
            left_rank,
            right_rank,
        }
    }

    pub fn left_rank(&self, l: u32) -> u32 {
        self.left_rank[l as usize]
    }

    pub fn right_rank(&self, r: u32) -> u32 {
        self.right_rank[r as usize]
    }

    /// Dumps `(e1, e2, weight)` rows for debugging.
    pub fn write_csv(&self, e1_ids: &[String], e2_ids: &[String], path: &Path) -> Result<()> {
        let mut out = String::from("e1,e2,weight\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{}\n",
                e1_ids[e.left as usize], e2_ids[e.right as usize], e.weight
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// One edge per candidate pair (query row = E2 entity, neighbor = E1 entity),
/// weighted by the clamped cosine similarity.
pub fn build_graph(c: &Candidates, left_rank: Arc<[u32]>, right_rank: Arc<[u32]>) -> SimilarityGraph {
    debug_assert_eq!(c.rows.len(), right_rank.len());
    // Rows never repeat a neighbor, so no merging is needed here.
    let edges = c
        .rows
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter().map(move |n| Edge {
                left: n.index,
                right: r as u32,
                weight: clamp_weight(n.similarity),
            })
        })
        .collect();
    SimilarityGraph {
        n_left: left_rank.len(),
        n_right: right_rank.len(),
        edges,
        left_rank,
        right_rank,
    }
}

/// Merges candidates of both query directions: `e2_queries` has one row per E2
/// entity over E1, `e1_queries` one row per E1 entity over E2.
pub fn build_graph_bidirectional(
    e2_queries: &Candidates,
    e1_queries: &Candidates,
    left_rank: Arc<[u32]>,
    right_rank: Arc<[u32]>,
) -> SimilarityGraph {
    let forward = e2_queries.rows.iter().enumerate().flat_map(|(r, row)| {
        row.iter().map(move |n| Edge {
            left: n.index,
            right: r as u32,
            weight: n.similarity,
        })
    });
    let backward = e1_queries.rows.iter().enumerate().flat_map(|(l, row)| {
        row.iter().map(move |n| Edge {
            left: l as u32,
            right: n.index,
            weight: n.similarity,
        })
    });
    SimilarityGraph::with_ranks(forward.chain(backward).collect(), left_rank, right_rank)
}

/// Keeps edges with weight ≥ `threshold`.
pub fn prune(g: &SimilarityGraph, threshold: f64) -> SimilarityGraph {
    SimilarityGraph {
        n_left: g.n_left,
        n_right: g.n_right,
        edges: g.edges.iter().copied().filter(|e| e.weight >= threshold).collect(),
        left_rank: g.left_rank.clone(),
        right_rank: g.right_rank.clone(),
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
    }
}

/// Transitive closure: every connected component becomes one cluster.
pub fn connected_components(g: &SimilarityGraph) -> ClusterSet {
    let offset = g.n_left as u32;
    let mut uf = UnionFind::new(g.n_left + g.n_right);
    for e in &g.edges {
        uf.union(e.left, offset + e.right);
    }
    let mut groups: HashMap<u32, Cluster> = HashMap::new();
    for e in &g.edges {
        groups.entry(uf.find(e.left)).or_default();
    }
    for l in 0..g.n_left as u32 {
        let root = uf.find(l);
        if let Some(c) = groups.get_mut(&root) {
            c.left.push(l);
        }
    }
    for r in 0..g.n_right as u32 {
        let root = uf.find(offset + r);
        if let Some(c) = groups.get_mut(&root) {
            c.right.push(r);
        }
    }
    ClusterSet::from_groups(g.n_left, g.n_right, groups.into_values().collect())
}

fn pairs_to_clusters(g: &SimilarityGraph, pairs: impl IntoIterator<Item = (u32, u32)>) -> ClusterSet {
    let groups = pairs
        .into_iter()
        .map(|(l, r)| Cluster {
            left: vec![l],
            right: vec![r],
        })
        .collect();
    ClusterSet::from_groups(g.n_left, g.n_right, groups)
}

/// Greedy one-to-one matching: edges in descending weight (ties by the
/// lexicographic id pair) are accepted when both endpoints are still free.
pub fn unique_mapping(g: &SimilarityGraph) -> ClusterSet {
    let mut edges = g.edges.clone();
    edges.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| g.left_rank(a.left).cmp(&g.left_rank(b.left)))
            .then_with(|| g.right_rank(a.right).cmp(&g.right_rank(b.right)))
    });
    let mut left_used = vec![false; g.n_left];
    let mut right_used = vec![false; g.n_right];
    let mut pairs = Vec::new();
    for e in edges {
        if !left_used[e.left as usize] && !right_used[e.right as usize] {
            left_used[e.left as usize] = true;
            right_used[e.right as usize] = true;
            pairs.push((e.left, e.right));
        }
    }
    pairs_to_clusters(g, pairs)
}

/// Király's proposal scheme with promotion.
///
/// Left entities propose down their preference list (descending weight, ties
/// by right id). A left entity that runs out of options is promoted once and
/// walks its list a second time. A right entity keeps the better proposer:
/// higher weight, then promoted over unpromoted, then the smaller left id.
pub fn kiraly(g: &SimilarityGraph) -> ClusterSet {
    let mut prefs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g.n_left];
    for e in &g.edges {
        prefs[e.left as usize].push((e.right, e.weight));
    }
    for list in &mut prefs {
        list.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| g.right_rank(a.0).cmp(&g.right_rank(b.0)))
        });
    }
    let mut next = vec![0usize; g.n_left];
    let mut promoted = vec![false; g.n_left];
    // right -> (left, weight of that edge)
    let mut holder: Vec<Option<(u32, f64)>> = vec![None; g.n_right];

    let mut order: Vec<u32> = (0..g.n_left as u32).filter(|&l| !prefs[l as usize].is_empty()).collect();
    order.sort_by_key(|&l| g.left_rank(l));
    let mut free: VecDeque<u32> = order.into();

    while let Some(l) = free.pop_front() {
        let li = l as usize;
        if next[li] == prefs[li].len() {
            if promoted[li] {
                continue;
            }
            promoted[li] = true;
            next[li] = 0;
        }
        let (r, w) = prefs[li][next[li]];
        next[li] += 1;
        match holder[r as usize] {
            None => holder[r as usize] = Some((l, w)),
            Some((cur, cur_w)) => {
                let wins = match w.total_cmp(&cur_w) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => match (promoted[li], promoted[cur as usize]) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => g.left_rank(l) < g.left_rank(cur),
                    },
                };
                if wins {
                    holder[r as usize] = Some((l, w));
                    free.push_back(cur);
                } else {
                    free.push_back(l);
                }
            }
        }
    }
    pairs_to_clusters(
        g,
        holder
            .iter()
            .enumerate()
            .filter_map(|(r, h)| h.map(|(l, _)| (l, r as u32))),
    )
}

/// Runs the selected clustering algorithm on an already pruned graph.
pub fn run_clustering(algorithm: Clustering, g: &SimilarityGraph) -> ClusterSet {
    match algorithm {
        Clustering::UniqueMapping => unique_mapping(g),
        Clustering::Kiraly => kiraly(g),
        Clustering::ConnectedComponents => connected_components(g),
    }
}
