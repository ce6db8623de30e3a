//! Random-forest regression with squared-error splits on binned features.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(&self, n_features: usize) -> usize {
        let n = n_features as f64;
        let m = match self {
            MaxFeatures::Sqrt => n.sqrt(),
            MaxFeatures::Log2 => n.log2(),
        };
        (m.floor() as usize).clamp(1, n_features.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Log2 => "log2",
        })
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            other => Err(Error::InvalidConfig(format!("max_features must be sqrt or log2, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 10,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.max_depth == 0 || self.min_samples_split < 2 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(format!("invalid forest parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Normalized impurity-reduction importance per feature.
    pub importances: Vec<f64>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Unweighted mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn feature_importances(&self) -> Vec<(String, f64)> {
        self.feature_names.iter().cloned().zip(self.importances.iter().copied()).collect()
    }
}

// Per-feature cut points and the bin of every row.
struct Binned {
    cuts: Vec<Vec<f64>>,
    bins: Vec<Vec<u16>>,
}

/// Cut points are midpoints between consecutive distinct values, thinned to
/// quantiles when there are more than `MAX_BINS` distinct values.
fn bin_feature(column: &[f64]) -> (Vec<f64>, Vec<u16>) {
    let mut uniq: Vec<f64> = column.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mids: Vec<f64> = uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let cuts: Vec<f64> = if mids.len() < MAX_BINS {
        mids
    } else {
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = (1..MAX_BINS)
            .map(|q| {
                let i = q * sorted.len() / MAX_BINS;
                // midpoint between the quantile value and the next larger value
                let v = sorted[i.min(sorted.len() - 1)];
                let pos = uniq.partition_point(|u| *u <= v);
                if pos < uniq.len() {
                    0.5 * (v + uniq[pos])
                } else {
                    f64::INFINITY
                }
            })
            .filter(|c| c.is_finite())
            .collect();
        cuts.dedup();
        cuts
    };
    let bins = column
        .iter()
        .map(|x| cuts.partition_point(|c| c < x) as u16)
        .collect();
    (cuts, bins)
}

fn bin_all(x: &[Vec<f64>], n_features: usize) -> Binned {
    let (cuts, bins) = (0..n_features)
        .into_par_iter()
        .map(|f| {
            let column: Vec<f64> = x.iter().map(|row| row[f]).collect();
            bin_feature(&column)
        })
        .unzip();
    Binned { cuts, bins }
}

struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Builder<'a> {
    data: &'a Binned,
    y: &'a [f64],
    params: &'a ForestParams,
    n_try: usize,
    importances: Vec<f64>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<Split> {
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n;
        let mut features: Vec<usize> = (0..self.data.cuts.len()).collect();
        features.shuffle(rng);
        let mut best: Option<Split> = None;
        let min_leaf = self.params.min_samples_leaf;
        for (tried, &f) in features.iter().enumerate() {
            // keep looking past n_try only while no valid split is found
            if tried >= self.n_try && best.is_some() {
                break;
            }
            let nb = self.data.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut count = vec![0usize; nb];
            let mut sum = vec![0.0f64; nb];
            let col = &self.data.bins[f];
            for &i in idx {
                let b = col[i] as usize;
                count[b] += 1;
                sum[b] += self.y[i];
            }
            let (mut nl, mut sl) = (0usize, 0.0f64);
            for b in 0..nb - 1 {
                nl += count[b];
                sl += sum[b];
                if count[b] == 0 {
                    continue;
                }
                let nr = idx.len() - nl;
                if nl < min_leaf || nr < min_leaf {
                    if nr < min_leaf {
                        break;
                    }
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().map_or(true, |s| gain > s.gain) {
                    best = Some(Split { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, root: Vec<usize>, rng: &mut ChaCha8Rng) {
        self.nodes.push(Node::Leaf { value: 0.0 });
        let mut stack = vec![(0usize, root, 0usize)];
        while let Some((node, idx, depth)) = stack.pop() {
            let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
            let split = if depth < self.params.max_depth && idx.len() >= self.params.min_samples_split {
                self.best_split(&idx, rng)
            } else {
                None
            };
            let Some(s) = split else {
                self.nodes[node] = Node::Leaf { value: mean };
                continue;
            };
            self.importances[s.feature] += s.gain;
            let col = &self.data.bins[s.feature];
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| (col[i] as usize) <= s.bin);
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { value: 0.0 });
            let right = self.nodes.len();
            self.nodes.push(Node::Leaf { value: 0.0 });
            self.nodes[node] = Node::Split {
                feature: s.feature,
                threshold: self.data.cuts[s.feature][s.bin],
                left,
                right,
            };
            stack.push((right, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
    }
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fits a forest on the rows `x` with labels `y`. Trees are grown in
/// parallel; each uses its own seeded stream, so the result does not depend
/// on scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], feature_names: Vec<String>, params: ForestParams) -> Result<ForestModel> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < params.min_samples_split {
        return Err(Error::InvalidArgument(format!(
            "{} training rows, need at least min_samples_split = {}",
            x.len(),
            params.min_samples_split
        )));
    }
    let p = feature_names.len();
    if let Some(row) = x.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: row.len(),
        });
    }
    let data = bin_all(x, p);
    let n = x.len();
    let n_try = params.max_features.count(p);
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t));
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                data: &data,
                y,
                params: &params,
                n_try,
                importances: vec![0.0; p],
                nodes: Vec::new(),
            };
            b.grow(sample, &mut rng);
            (Tree { nodes: b.nodes }, b.importances)
        })
        .collect();
    let mut importances = vec![0.0; p];
    let mut contributing = 0usize;
    for (_, imp) in &grown {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            contributing += 1;
            for (acc, v) in importances.iter_mut().zip(imp) {
                *acc += v / total;
            }
        }
    }
    if contributing == 0 {
        // no split anywhere: every feature is equally (un)informative
        importances = vec![1.0 / p.max(1) as f64; p];
    } else {
        let total: f64 = importances.iter().sum();
        for v in importances.iter_mut() {
            *v /= total;
        }
    }
    Ok(ForestModel {
        params,
        feature_names,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        importances,
    })
}

pub fn mean_squared_error(model: &ForestModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let pred = model.predict_many(x);
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    fn linear(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let y = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        (x, y)
    }

    fn variance(y: &[f64]) -> f64 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(24), 4);
        assert_eq!(MaxFeatures::Log2.count(24), 4);
        assert_eq!(MaxFeatures::Sqrt.count(100), 10);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
        assert_eq!(MaxFeatures::Sqrt.count(2), 1);
    }

    #[test]
    fn binning_uses_midpoints() {
        let (cuts, bins) = bin_feature(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(cuts, vec![1.5, 2.5]);
        assert_eq!(bins, vec![2, 0, 1, 1]);
        let many: Vec<f64> = (0..10_000).map(|i| (i * 7919 % 10_000) as f64).collect();
        let (cuts, bins) = bin_feature(&many);
        assert!(cuts.len() < MAX_BINS);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        for (x, b) in many.iter().zip(&bins) {
            let b = *b as usize;
            if b > 0 {
                assert!(*x > cuts[b - 1]);
            }
            if b < cuts.len() {
                assert!(*x <= cuts[b]);
            }
        }
    }

    #[test]
    fn constant_labels() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = vec![0.7; 30];
        let m = fit_forest(&x, &y, names(2), ForestParams::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        for r in &x {
            approx::assert_abs_diff_eq!(m.predict(r), 0.7, epsilon = 1e-12);
        }
        approx::assert_abs_diff_eq!(m.predict(&[100.0, -4.0]), 0.7, epsilon = 1e-12);
        assert_eq!(m.importances, vec![0.5, 0.5]);
    }

    #[test]
    fn training_mse_below_label_variance() {
        let (x, y) = linear(200);
        let params = ForestParams {
            n_estimators: 200,
            max_depth: 10,
            ..ForestParams::default()
        };
        let m = fit_forest(&x, &y, names(1), params).unwrap();
        let mse = mean_squared_error(&m, &x, &y);
        let var = variance(&y);
        assert!((var - 4.0 * (200.0f64 * 200.0 - 1.0) / (12.0 * 200.0 * 200.0)).abs() < 1e-9);
        assert!(mse < var / 100.0, "mse {mse} var {var}");
        assert!(m.trees.iter().all(|t| t.depth() <= 10));
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let (x, y) = linear(120);
        let params = ForestParams {
            n_estimators: 40,
            seed: 5,
            ..ForestParams::default()
        };
        let a = fit_forest(&x, &y, names(1), params).unwrap();
        let b = fit_forest(&x, &y, names(1), params).unwrap();
        assert_eq!(a, b);
        let probe: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 37.0]).collect();
        let pa = a.predict_many(&probe);
        assert_eq!(pa, b.predict_many(&probe));
        let mut rev = a.clone();
        rev.trees.reverse();
        for (p, q) in pa.iter().zip(rev.predict_many(&probe)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn single_informative_feature_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..5).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| (3.0 * r[2]).sin()).collect();
        let m = fit_forest(&x, &y, names(5), ForestParams::default()).unwrap();
        let imp = m.importances.clone();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (i, v) in imp.iter().enumerate() {
            assert!(v.is_finite() && (0.0..=1.0).contains(v));
            if i != 2 {
                assert!(imp[2] > *v);
            }
        }
    }

    #[test]
    fn respects_min_samples_leaf() {
        let (x, y) = linear(50);
        let params = ForestParams {
            n_estimators: 10,
            min_samples_leaf: 20,
            ..ForestParams::default()
        };
        let m = fit_forest(&x, &y, names(1), params).unwrap();
        // at most one split fits two leaves of 20 into 50 samples
        assert!(m.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn too_few_rows() {
        let params = ForestParams {
            min_samples_split: 5,
            ..ForestParams::default()
        };
        assert!(fit_forest(&[vec![1.0]], &[1.0], names(1), params).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = linear(30);
        let m = fit_forest(&x, &y, names(1), ForestParams { n_estimators: 3, ..Default::default() }).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: ForestModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
