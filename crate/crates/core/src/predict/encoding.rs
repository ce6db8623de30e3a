//! Numeric encoding of (dataset features, configuration) pairs.

use serde::{Deserialize, Serialize};

use crate::datamodel::{canonical_embedder_name, Clustering, PipelineConfig, PRETRAINED_EMBEDDERS};
use crate::profile::FEATURE_NAMES;

/// Column layout: 12 dataset features, one-hot embedder, `k`, one-hot
/// clustering, threshold. `k` and threshold are kept raw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    /// Embedder vocabulary in one-hot order.
    pub embedders: Vec<String>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new::<&str>(&[])
    }
}

impl Encoder {
    /// The seven pre-trained names first, then any other names sorted.
    pub fn new<S: AsRef<str>>(extra: &[S]) -> Self {
        let mut embedders: Vec<String> = PRETRAINED_EMBEDDERS.iter().map(|s| s.to_string()).collect();
        let mut others: Vec<String> = extra
            .iter()
            .map(|e| canonical_embedder_name(e.as_ref()))
            .filter(|e| !embedders.contains(e))
            .collect();
        others.sort();
        others.dedup();
        embedders.extend(others);
        Self { embedders }
    }

    pub fn width(&self) -> usize {
        FEATURE_NAMES.len() + self.embedders.len() + 1 + Clustering::ALL.len() + 1
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        names.extend(self.embedders.iter().map(|e| format!("embedder={e}")));
        names.push("k".into());
        names.extend(Clustering::ALL.iter().map(|c| format!("clustering={}", c.code())));
        names.push("threshold".into());
        names
    }

    /// `None` when the embedder is outside the vocabulary.
    pub fn encode(&self, features: &[f64; 12], cfg: &PipelineConfig) -> Option<Vec<f64>> {
        let e = self.embedders.iter().position(|x| *x == cfg.embedder)?;
        let mut v = Vec::with_capacity(self.width());
        v.extend_from_slice(features);
        v.extend((0..self.embedders.len()).map(|i| f64::from(u8::from(i == e))));
        v.push(cfg.k as f64);
        v.extend(Clustering::ALL.iter().map(|c| f64::from(u8::from(*c == cfg.clustering))));
        v.push(cfg.threshold);
        Some(v)
    }

    pub fn decode(&self, v: &[f64]) -> Option<PipelineConfig> {
        if v.len() != self.width() {
            return None;
        }
        let one_hot = |xs: &[f64]| -> Option<usize> {
            let hot: Vec<usize> = xs.iter().enumerate().filter(|(_, x)| **x == 1.0).map(|(i, _)| i).collect();
            (hot.len() == 1 && xs.iter().all(|x| *x == 0.0 || *x == 1.0)).then(|| hot[0])
        };
        let n_emb = self.embedders.len();
        let base = FEATURE_NAMES.len();
        let e = one_hot(&v[base..base + n_emb])?;
        let k = v[base + n_emb];
        let c = one_hot(&v[base + n_emb + 1..base + n_emb + 4])?;
        let t = v[base + n_emb + 4];
        if k < 1.0 || k.fract() != 0.0 {
            return None;
        }
        Some(PipelineConfig::new(&self.embedders[e], k as usize, Clustering::ALL[c], t))
    }
}
