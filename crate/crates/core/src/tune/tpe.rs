//! Tree-structured Parzen estimator, one independent density per parameter.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::sampler::{random_point, stream_rng, Observation, Sampler};
use super::space::{Domain, ParamSpace, Point, Value};

const STREAM_TPE: u64 = 3;

#[derive(Debug, Clone, Copy)]
pub struct TpeSampler {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for TpeSampler {
    fn default() -> Self {
        Self {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
        }
    }
}

fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mixture of truncated Gaussians on `[low, high]`.
#[derive(Debug, Clone)]
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    // log of (mixture weight / truncation mass)
    log_norm: Vec<f64>,
    low: f64,
    high: f64,
    integer: bool,
}

impl Parzen {
    fn fit(xs: &[f64], low: f64, high: f64, integer: bool) -> Self {
        let range = high - low;
        let mut mus: Vec<f64> = xs.to_vec();
        mus.push(0.5 * (low + high));
        let m = xs.len();
        let mut order: Vec<usize> = (0..mus.len()).collect();
        order.sort_by(|&a, &b| mus[a].total_cmp(&mus[b]).then(a.cmp(&b)));
        let mut sigmas = vec![0.0; mus.len()];
        for (pos, &i) in order.iter().enumerate() {
            let left = if pos == 0 { low } else { mus[order[pos - 1]] };
            let right = if pos + 1 == order.len() { high } else { mus[order[pos + 1]] };
            sigmas[i] = (mus[i] - left).max(right - mus[i]);
        }
        let min_sigma = range / (1.0 + m as f64).min(100.0);
        for s in sigmas.iter_mut() {
            *s = s.clamp(min_sigma, range);
        }
        sigmas[m] = range;
        let w = -(mus.len() as f64).ln();
        let log_norm = mus
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| {
                let z = std_cdf((high - mu) / s) - std_cdf((low - mu) / s);
                w - z.max(1e-300).ln()
            })
            .collect();
        Self {
            mus,
            sigmas,
            log_norm,
            low,
            high,
            integer,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        let terms = self.mus.iter().zip(&self.sigmas).zip(&self.log_norm).map(|((&mu, &s), &ln)| {
            if self.integer {
                let mass = std_cdf((x + 0.5 - mu) / s) - std_cdf((x - 0.5 - mu) / s);
                ln + mass.max(1e-300).ln()
            } else {
                let z = (x - mu) / s;
                ln - 0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        });
        log_sum_exp(terms)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = rng.gen_range(0..self.mus.len());
        let (mu, s) = (self.mus[i], self.sigmas[i]);
        let a = std_cdf((self.low - mu) / s);
        let b = std_cdf((self.high - mu) / s);
        let u = a + (b - a) * rng.gen::<f64>();
        let x = if u > 0.0 && u < 1.0 {
            mu + s * Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(u)
        } else {
            mu
        };
        x.clamp(self.low, self.high)
    }
}

#[derive(Debug, Clone)]
enum Estimator {
    Numeric(Parzen),
    Categorical(Vec<f64>),
    Fixed(Value),
}

impl Estimator {
    fn fit(domain: &Domain, values: &[Value]) -> Self {
        match domain {
            Domain::Categorical(choices) => {
                let n = choices.len();
                let mut w = vec![1.0 / n as f64; n];
                for v in values {
                    if let Value::Cat(i) = v {
                        w[*i] += 1.0;
                    }
                }
                let total: f64 = w.iter().sum();
                Estimator::Categorical(w.into_iter().map(|x| (x / total).ln()).collect())
            }
            Domain::Int { low, high } => {
                let xs: Vec<f64> = values.iter().map(Value::as_f64).collect();
                Estimator::Numeric(Parzen::fit(&xs, *low as f64 - 0.5, *high as f64 + 0.5, true))
            }
            Domain::Float { low, high } if high > low => {
                let xs: Vec<f64> = values.iter().map(Value::as_f64).collect();
                Estimator::Numeric(Parzen::fit(&xs, *low, *high, false))
            }
            Domain::Float { low, .. } => Estimator::Fixed(Value::Float(*low)),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, domain: &Domain, rng: &mut R) -> Value {
        match (self, domain) {
            (Estimator::Numeric(p), Domain::Int { low, high }) => {
                Value::Int((p.sample(rng).round() as i64).clamp(*low, *high))
            }
            (Estimator::Numeric(p), _) => Value::Float(p.sample(rng)),
            (Estimator::Categorical(logp), _) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, lp) in logp.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return Value::Cat(i);
                    }
                }
                Value::Cat(logp.len() - 1)
            }
            (Estimator::Fixed(v), _) => *v,
        }
    }

    fn log_density(&self, v: &Value) -> f64 {
        match (self, v) {
            (Estimator::Numeric(p), v) => p.log_density(v.as_f64()),
            (Estimator::Categorical(logp), Value::Cat(i)) => logp[*i],
            _ => 0.0,
        }
    }
}

impl TpeSampler {
    /// Indices of the good (top-γ) observations, best first; `None` when the
    /// split is degenerate.
    fn split(&self, history: &[Observation]) -> Option<Vec<usize>> {
        let n = history.len();
        let lo = history.iter().map(|o| o.value).fold(f64::INFINITY, f64::min);
        let hi = history.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| history[b].value.total_cmp(&history[a].value).then(a.cmp(&b)));
        let n_good = ((self.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
        order.truncate(n_good);
        Some(order)
    }
}

impl Sampler for TpeSampler {
    fn name(&self) -> &'static str {
        "tpe"
    }

    fn suggest(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Point {
        let n = history.len();
        if n < self.n_startup.max(2) {
            return random_point(space, n, seed);
        }
        let good = match self.split(history) {
            Some(g) => g,
            None => return random_point(space, n, seed),
        };
        let mut is_good = vec![false; n];
        for &i in &good {
            is_good[i] = true;
        }
        let models: Vec<(Estimator, Estimator)> = space
            .params
            .iter()
            .enumerate()
            .map(|(d, p)| {
                let (mut l, mut g) = (Vec::new(), Vec::new());
                for (i, o) in history.iter().enumerate() {
                    if is_good[i] {
                        l.push(o.point[d]);
                    } else {
                        g.push(o.point[d]);
                    }
                }
                (Estimator::fit(&p.domain, &l), Estimator::fit(&p.domain, &g))
            })
            .collect();
        let mut rng = stream_rng(seed, n, STREAM_TPE);
        let mut best: Option<(f64, Point)> = None;
        for _ in 0..self.n_candidates.max(1) {
            let cand: Point = space
                .params
                .iter()
                .zip(&models)
                .map(|(p, (l, _))| l.sample(&p.domain, &mut rng))
                .collect();
            let score: f64 = cand
                .iter()
                .zip(&models)
                .map(|(v, (l, g))| l.log_density(v) - g.log_density(v))
                .sum();
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, cand));
            }
        }
        best.expect("at least one candidate").1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tune::sampler::RandomSampler;

    fn space() -> ParamSpace {
        ParamSpace::new(vec![
            ("c", Domain::Categorical(vec!["a".into(), "b".into()])),
            ("i", Domain::Int { low: 1, high: 100 }),
            ("f", Domain::Float { low: 0.0, high: 1.0 }),
        ])
    }

    #[test]
    fn truncated_mixture_integrates_to_one() {
        let p = Parzen::fit(&[0.1, 0.15, 0.8], 0.0, 1.0, false);
        let n = 20_000;
        let h = 1.0 / n as f64;
        let integral: f64 = (0..n).map(|i| p.log_density((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
        let q = Parzen::fit(&[3.0, 4.0, 90.0], 0.5, 100.5, true);
        let mass: f64 = (1..=100).map(|x| q.log_density(x as f64).exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9, "{mass}");
    }

    #[test]
    fn bandwidth_follows_neighbor_spacing() {
        let mut xs = vec![0.2, 0.3];
        xs.extend(std::iter::repeat(0.95).take(98));
        let p = Parzen::fit(&xs, 0.0, 1.0, false);
        // sorted: 0.2, 0.3, prior 0.5, ...; sigma = larger gap to a neighbor
        assert!((p.sigmas[0] - 0.2).abs() < 1e-12);
        assert!((p.sigmas[1] - 0.2).abs() < 1e-12);
        assert!((p.sigmas[100] - 1.0).abs() < 1e-12);
        assert!((p.sigmas[50] - 0.01).abs() < 1e-12);
        // two points: the floor is range / 3
        let few = Parzen::fit(&[0.2, 0.3], 0.0, 1.0, false);
        assert!((few.sigmas[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn startup_matches_random() {
        let sp = space();
        let tpe = TpeSampler::default();
        let mut hist = Vec::new();
        for _ in 0..10 {
            let p = tpe.suggest(&sp, &hist, 5);
            assert_eq!(p, RandomSampler.suggest(&sp, &hist, 5));
            hist.push(Observation { point: p, value: 0.0 });
        }
    }

    #[test]
    fn all_equal_history_falls_back_to_random() {
        let sp = space();
        let hist: Vec<Observation> = (0..20)
            .map(|i| Observation {
                point: RandomSampler.suggest(&sp, &vec![], i),
                value: 0.5,
            })
            .collect();
        let tpe = TpeSampler::default();
        assert_eq!(tpe.suggest(&sp, &hist, 9), RandomSampler.suggest(&sp, &hist, 9));
    }

    #[test]
    fn concentrates_near_good_region() {
        let sp = space();
        let tpe = TpeSampler::default();
        let f = |p: &Point| -(p[2].as_f64() - 0.8).powi(2) - ((p[1].as_f64() - 30.0) / 100.0).powi(2);
        let mut hist: Vec<Observation> = Vec::new();
        for _ in 0..60 {
            let p = tpe.suggest(&sp, &hist, 11);
            assert!(sp.contains(&p));
            let value = f(&p);
            hist.push(Observation { point: p, value });
        }
        let late: Vec<f64> = hist[40..].iter().map(|o| o.point[2].as_f64()).collect();
        let mean = late.iter().sum::<f64>() / late.len() as f64;
        assert!((mean - 0.8).abs() < 0.15, "late mean {mean}");
    }

    #[test]
    fn deterministic() {
        let sp = space();
        let tpe = TpeSampler::default();
        let hist: Vec<Observation> = (0..15)
            .map(|i| {
                let point = RandomSampler.suggest(&sp, &vec![], i);
                let value = point[2].as_f64();
                Observation { point, value }
            })
            .collect();
        assert_eq!(tpe.suggest(&sp, &hist, 4), tpe.suggest(&sp, &hist, 4));
    }
}
