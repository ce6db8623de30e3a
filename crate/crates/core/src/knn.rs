//! Exact top-k cosine retrieval over unit-norm embedding rows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

/// One retrieved neighbor: row position in the index and its cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub similarity: f64,
}

impl Neighbor {
    /// Descending similarity, then ascending insertion position.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap entry whose top is the currently worst kept neighbor.
struct Worst(Neighbor);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Exhaustive index over the rows of an embedding matrix (the E1 side).
#[derive(Debug, Clone)]
pub struct VectorIndex {
    matrix: EmbeddingMatrix,
}

/// Builds an index; the matrix rows must already be unit-norm or zero.
pub fn build_index(m: EmbeddingMatrix) -> Result<VectorIndex> {
    if m.is_empty() {
        return Err(Error::EmptyCollection("index".into()));
    }
    Ok(VectorIndex { matrix: m })
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn ids(&self) -> &[String] {
        self.matrix.ids()
    }

    /// The `min(k, len)` most similar rows to `q`, best first; ties go to the
    /// earlier row.
    pub fn query_topk(&self, q: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        let keep = k.min(self.len());
        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(keep + 1);
        for (i, row) in self.matrix.rows().enumerate() {
            let similarity: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
            let cand = Neighbor {
                index: i as u32,
                similarity,
            };
            if heap.len() < keep {
                heap.push(Worst(cand));
            } else if let Some(top) = heap.peek() {
                if cand.rank_cmp(&top.0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(cand));
                }
            }
        }
        let mut out: Vec<Neighbor> = heap.into_iter().map(|w| w.0).collect();
        out.sort_by(Neighbor::rank_cmp);
        Ok(out)
    }

    /// Runs `query_topk` for every row of `queries`; output order follows the
    /// query rows regardless of scheduling.
    pub fn batch_query(&self, queries: &EmbeddingMatrix, k: usize) -> Result<Candidates> {
        let rows = (0..queries.len())
            .into_par_iter()
            .map(|i| self.query_topk(queries.row(i), k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Candidates {
            n_indexed: self.len(),
            rows,
        })
    }
}

/// Per-query neighbor lists produced by the filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    /// Number of indexed (E1) entities.
    pub n_indexed: usize,
    /// One row per query (E2) entity, best neighbor first.
    pub rows: Vec<Vec<Neighbor>>,
}

impl Candidates {
    pub fn n_queries(&self) -> usize {
        self.rows.len()
    }

    /// Keeps the first `k` neighbors of every row. Because each row is an exact
    /// ranked prefix, this equals querying with `k` directly.
    pub fn truncated(&self, k: usize) -> Candidates {
        Candidates {
            n_indexed: self.n_indexed,
            rows: self
                .rows
                .iter()
                .map(|r| r[..k.min(r.len())].to_vec())
                .collect(),
        }
    }

    pub fn max_row_len(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }
}
