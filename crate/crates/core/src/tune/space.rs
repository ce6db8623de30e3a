//! Parameter domains shared by all samplers, and the pipeline search space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{canonical_embedder_name, Clustering, PipelineConfig, PRETRAINED_EMBEDDERS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Categorical(Vec<String>),
    Int { low: i64, high: i64 },
    Float { low: f64, high: f64 },
}

impl Domain {
    /// Maps `u ∈ [0, 1)` onto the domain: affine for floats, floor for
    /// integers, equal-width intervals for categories.
    pub fn from_unit(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match self {
            Domain::Categorical(choices) => {
                let n = choices.len();
                Value::Cat(((u * n as f64).floor() as usize).min(n - 1))
            }
            Domain::Int { low, high } => {
                let span = (high - low + 1) as f64;
                Value::Int((low + (u * span).floor() as i64).min(*high))
            }
            Domain::Float { low, high } => Value::Float(low + u * (high - low)),
        }
    }

    /// A unit coordinate that `from_unit` maps back to `v` (interval centres
    /// for integers and categories).
    pub fn to_unit(&self, v: &Value) -> f64 {
        match (self, v) {
            (Domain::Categorical(c), Value::Cat(i)) => (*i as f64 + 0.5) / c.len() as f64,
            (Domain::Int { low, high }, Value::Int(x)) => {
                (x - low) as f64 / (high - low + 1) as f64 + 0.5 / (high - low + 1) as f64
            }
            (Domain::Float { low, high }, Value::Float(x)) if high > low => (x - low) / (high - low),
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Domain::Categorical(choices) => Value::Cat(rng.gen_range(0..choices.len())),
            Domain::Int { low, high } => Value::Int(rng.gen_range(*low..=*high)),
            Domain::Float { low, high } => Value::Float(rng.gen_range(*low..=*high)),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::Categorical(c), Value::Cat(i)) => *i < c.len(),
            (Domain::Int { low, high }, Value::Int(x)) => low <= x && x <= high,
            (Domain::Float { low, high }, Value::Float(x)) => *low <= *x && *x <= *high,
            _ => false,
        }
    }

    /// Width of the GP encoding: one column per category, one otherwise.
    pub fn encoded_width(&self) -> usize {
        match self {
            Domain::Categorical(c) => c.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Cat(usize),
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Cat(i) => i as f64,
            Value::Int(x) => x as f64,
            Value::Float(x) => x,
        }
    }
}

pub type Point = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub domain: Domain,
}

/// Ordered list of named parameter domains.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    pub params: Vec<Param>,
}

impl ParamSpace {
    pub fn new(params: Vec<(&str, Domain)>) -> Self {
        Self {
            params: params
                .into_iter()
                .map(|(name, domain)| Param {
                    name: name.to_string(),
                    domain,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> Point {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &x)| p.domain.from_unit(x))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.params.iter().map(|p| p.domain.sample(rng)).collect()
    }

    pub fn contains(&self, point: &[Value]) -> bool {
        point.len() == self.dim()
            && self
                .params
                .iter()
                .zip(point)
                .all(|(p, v)| p.domain.contains(v))
    }

    /// One-hot categories and min-max scaled numerics.
    pub fn encode(&self, point: &[Value]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.iter().map(|p| p.domain.encoded_width()).sum());
        for (p, v) in self.params.iter().zip(point) {
            match (&p.domain, v) {
                (Domain::Categorical(c), Value::Cat(i)) => {
                    out.extend((0..c.len()).map(|j| if j == *i { 1.0 } else { 0.0 }));
                }
                (Domain::Int { low, high }, v) => {
                    out.push(min_max(v.as_f64(), *low as f64, *high as f64));
                }
                (Domain::Float { low, high }, v) => out.push(min_max(v.as_f64(), *low, *high)),
                (Domain::Categorical(c), _) => out.extend(std::iter::repeat(0.0).take(c.len())),
            }
        }
        out
    }
}

fn min_max(x: f64, low: f64, high: f64) -> f64 {
    if high > low {
        (x - low) / (high - low)
    } else {
        0.5
    }
}

/// The pipeline configuration space: language models × k × clustering × threshold.
///
/// Samplers draw thresholds from the continuous `[threshold_low, threshold_high]`
/// range; grid search uses the discrete `threshold_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub embedders: Vec<String>,
    pub k_min: usize,
    pub k_max: usize,
    #[serde(default = "one")]
    pub k_step: usize,
    pub clustering: Vec<Clustering>,
    #[serde(default = "zero")]
    pub threshold_low: f64,
    #[serde(default = "one_f")]
    pub threshold_high: f64,
    #[serde(default = "default_threshold_grid")]
    pub threshold_grid: Vec<f64>,
}

fn one() -> usize {
    1
}
fn zero() -> f64 {
    0.0
}
fn one_f() -> f64 {
    1.0
}

/// 0.05, 0.10, …, 0.95.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

impl SearchSpace {
    /// The full space over the given language models.
    pub fn new(embedders: &[&str]) -> Self {
        Self {
            embedders: embedders.iter().map(|e| canonical_embedder_name(e)).collect(),
            k_min: 1,
            k_max: 100,
            k_step: 1,
            clustering: Clustering::ALL.to_vec(),
            threshold_low: 0.0,
            threshold_high: 1.0,
            threshold_grid: default_threshold_grid(),
        }
    }

    /// The seven pre-trained models: 39,900 grid points.
    pub fn pretrained() -> Self {
        Self::new(&PRETRAINED_EMBEDDERS)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.embedders.is_empty() {
            return bad("search space has no embedders");
        }
        if self.clustering.is_empty() {
            return bad("search space has no clustering algorithms");
        }
        if self.k_min < 1 || self.k_max < self.k_min || self.k_step < 1 {
            return bad("k range must satisfy 1 <= k_min <= k_max and step >= 1");
        }
        if !(0.0 <= self.threshold_low && self.threshold_low <= self.threshold_high && self.threshold_high <= 1.0) {
            return bad("threshold range must lie within [0, 1]");
        }
        if self.threshold_grid.is_empty() || self.threshold_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("threshold grid must be non-empty and within [0, 1]");
        }
        Ok(())
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.k_step).collect()
    }

    pub fn grid_len(&self) -> usize {
        self.embedders.len() * self.k_values().len() * self.clustering.len() * self.threshold_grid.len()
    }

    /// All grid points, embedder-major, then k, clustering, threshold.
    pub fn grid(&self) -> Vec<PipelineConfig> {
        let mut out = Vec::with_capacity(self.grid_len());
        for e in &self.embedders {
            for k in self.k_values() {
                for &c in &self.clustering {
                    for &t in &self.threshold_grid {
                        out.push(PipelineConfig::new(e, k, c, t));
                    }
                }
            }
        }
        out
    }

    pub fn param_space(&self) -> ParamSpace {
        ParamSpace::new(vec![
            ("embedder", Domain::Categorical(self.embedders.clone())),
            (
                "k",
                Domain::Int {
                    low: self.k_min as i64,
                    high: self.k_max as i64,
                },
            ),
            (
                "clustering",
                Domain::Categorical(self.clustering.iter().map(|c| c.code().to_string()).collect()),
            ),
            (
                "threshold",
                Domain::Float {
                    low: self.threshold_low,
                    high: self.threshold_high,
                },
            ),
        ])
    }

    pub fn config_of(&self, point: &[Value]) -> Result<PipelineConfig> {
        match point {
            [Value::Cat(e), Value::Int(k), Value::Cat(c), Value::Float(t)] => Ok(PipelineConfig::new(
                &self.embedders[*e],
                *k as usize,
                self.clustering[*c],
                *t,
            )),
            _ => Err(Error::InvalidArgument(format!("point {point:?} is not a pipeline point"))),
        }
    }

    pub fn point_of(&self, cfg: &PipelineConfig) -> Result<Point> {
        let e = self
            .embedders
            .iter()
            .position(|e| *e == cfg.embedder)
            .ok_or_else(|| Error::InvalidConfig(format!("embedder {} not in space", cfg.embedder)))?;
        let c = self
            .clustering
            .iter()
            .position(|c| *c == cfg.clustering)
            .ok_or_else(|| Error::InvalidConfig(format!("clustering {} not in space", cfg.clustering)))?;
        Ok(vec![
            Value::Cat(e),
            Value::Int(cfg.k as i64),
            Value::Cat(c),
            Value::Float(cfg.threshold),
        ])
    }

    /// True when a sampler could have produced `cfg`.
    pub fn contains(&self, cfg: &PipelineConfig) -> bool {
        self.point_of(cfg)
            .map(|p| self.param_space().contains(&p))
            .unwrap_or(false)
    }
}
