//! Gaussian-process sampler: Matérn-5/2 surrogate and log expected improvement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use super::sampler::{random_point, shifted_sobol, stream_rng, Observation, Sampler};
use super::space::{Domain, ParamSpace, Point};

const STREAM_GP: u64 = 4;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy)]
pub struct GpSampler {
    pub n_startup: usize,
    /// Size of the quasi-random candidate batch.
    pub n_candidates: usize,
    /// Extra candidates drawn around the best observations.
    pub n_local: usize,
    /// Relative observation-noise jitter added to the kernel diagonal.
    pub jitter: f64,
}

impl Default for GpSampler {
    fn default() -> Self {
        Self {
            n_startup: 10,
            n_candidates: 256,
            n_local: 128,
            jitter: 1e-4,
        }
    }
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln E[max(Y - best, 0)]` for `Y ~ N(mu, sigma²)`, stable far into the
/// lower tail.
pub fn log_expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let z = (mu - best) / sigma;
    sigma.ln() + log_h(z)
}

// ln(φ(z) + zΦ(z))
fn log_h(z: f64) -> f64 {
    if z > -10.0 {
        let phi = (-0.5 * z * z - LN_SQRT_2PI).exp();
        (phi + z * std_cdf(z)).max(f64::MIN_POSITIVE).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 3.0 / z2 + 15.0 / (z2 * z2) - 105.0 / (z2 * z2 * z2) + 945.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - LN_SQRT_2PI - 2.0 * (-z).ln() + series.ln()
    }
}

struct Posterior {
    x: Vec<Vec<f64>>,
    lengthscale: f64,
    scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl Posterior {
    fn predict(&self, q: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(dist(xi, q) / self.lengthscale)),
        );
        let mu = k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).expect("triangular solve");
        let var = self.scale * (1.0 - v.dot(&v)).max(1e-12);
        (mu, var.sqrt())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
}

/// Fits lengthscale and signal scale by maximizing the marginal likelihood
/// over a log-grid. One Cholesky per lengthscale; the scale enters in
/// closed form.
fn fit(x: Vec<Vec<f64>>, y: &DVector<f64>, jitter: f64) -> Option<Posterior> {
    let n = x.len();
    let d = DMatrix::from_fn(n, n, |i, j| dist(&x[i], &x[j]));
    let mut best: Option<(f64, f64, f64, Cholesky<f64, Dyn>)> = None;
    for ls in log_grid(0.03, 3.0, 14) {
        let mut eps = jitter;
        let chol = loop {
            let a = DMatrix::from_fn(n, n, |i, j| matern52(d[(i, j)] / ls) + if i == j { eps } else { 0.0 });
            match Cholesky::new(a) {
                Some(c) => break Some(c),
                None if eps < 1.0 => eps *= 10.0,
                None => break None,
            }
        };
        let Some(chol) = chol else { continue };
        let alpha = chol.solve(y);
        let q = y.dot(&alpha);
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let (ll, s) = log_grid(0.01, 100.0, 25)
            .map(|s| (-0.5 * q / s - 0.5 * n as f64 * s.ln() - 0.5 * logdet, s))
            .fold((f64::NEG_INFINITY, 1.0), |a, b| if b.0 > a.0 { b } else { a });
        if best.as_ref().map_or(true, |b| ll > b.0) {
            best = Some((ll, ls, s, chol));
        }
    }
    let (_, lengthscale, scale, chol) = best?;
    let alpha = chol.solve(y);
    Some(Posterior {
        x,
        lengthscale,
        scale,
        chol,
        alpha,
    })
}

impl GpSampler {
    fn candidates(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Vec<Point> {
        let n = history.len();
        let sobol = shifted_sobol(space.dim(), seed ^ (n as u64).wrapping_mul(0x2545_f491_4f6c_dd1d), STREAM_GP);
        let mut out: Vec<Point> = sobol
            .points(0, self.n_candidates)
            .iter()
            .map(|u| space.from_unit(u))
            .collect();

        // local refinement around the best few observations
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| history[b].value.total_cmp(&history[a].value).then(a.cmp(&b)));
        let anchors: Vec<&Observation> = order.iter().take(4).map(|&i| &history[i]).collect();
        let mut rng = stream_rng(seed, n, STREAM_GP);
        let scales = [0.1, 0.03, 0.01];
        for j in 0..self.n_local {
            let anchor = anchors[j % anchors.len()];
            let scale = scales[(j / anchors.len()) % scales.len()];
            let u: Vec<f64> = space
                .params
                .iter()
                .zip(&anchor.point)
                .map(|(p, v)| {
                    let u0 = p.domain.to_unit(v);
                    match p.domain {
                        Domain::Categorical(_) if rng.gen::<f64>() < 0.2 => rng.gen::<f64>(),
                        Domain::Categorical(_) => u0,
                        _ => {
                            let g: f64 = rng.sample(StandardNormal);
                            (u0 + scale * g).clamp(0.0, 1.0 - 1e-12)
                        }
                    }
                })
                .collect();
            out.push(space.from_unit(&u));
        }
        out
    }
}

impl Sampler for GpSampler {
    fn name(&self) -> &'static str {
        "gp"
    }

    fn suggest(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Point {
        let n = history.len();
        if n < self.n_startup.max(2) {
            return random_point(space, n, seed);
        }
        let values: Vec<f64> = history.iter().map(|o| o.value).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return random_point(space, n, seed);
        }
        let y = DVector::from_iterator(n, values.iter().map(|v| (v - mean) / sd));
        let x: Vec<Vec<f64>> = history.iter().map(|o| space.encode(&o.point)).collect();
        let Some(post) = fit(x, &y, self.jitter) else {
            return random_point(space, n, seed);
        };
        let incumbent = y.max();
        let mut best: Option<(f64, Point)> = None;
        for cand in self.candidates(space, history, seed) {
            let (mu, sigma) = post.predict(&space.encode(&cand));
            let score = log_expected_improvement(mu, sigma, incumbent);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, cand));
            }
        }
        best.map(|b| b.1).unwrap_or_else(|| random_point(space, n, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tune::space::Value;

    // E[max(Y - best, 0)] by Simpson's rule over mu ± 12 sigma.
    fn ei_quadrature(mu: f64, sigma: f64, best: f64) -> f64 {
        let (a, b) = (best.max(mu - 12.0 * sigma), (mu + 12.0 * sigma).max(best));
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |y: f64| {
            let z = (y - mu) / sigma;
            (y - best).max(0.0) * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn log_ei_matches_quadrature() {
        for &(mu, sigma, best) in &[
            (0.0, 1.0, 0.0),
            (1.0, 0.5, 0.2),
            (-1.0, 0.7, 1.0),
            (0.3, 2.0, -1.0),
            (-2.0, 0.5, 0.5),
        ] {
            let exact = ei_quadrature(mu, sigma, best);
            let got = log_expected_improvement(mu, sigma, best).exp();
            assert!((got - exact).abs() <= 1e-7 * exact.max(1e-3), "{mu} {sigma} {best}: {got} vs {exact}");
        }
    }

    #[test]
    fn log_ei_tail_is_continuous_and_monotone() {
        let below = log_h(-10.0 - 1e-9);
        let above = log_h(-10.0 + 1e-9);
        assert!((below - above).abs() < 1e-6, "{below} vs {above}");
        let mut last = f64::NEG_INFINITY;
        for i in 0..400 {
            let z = -40.0 + i as f64 * 0.1;
            let v = log_h(z);
            assert!(v.is_finite());
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn matern_at_zero_and_decay() {
        assert_eq!(matern52(0.0), 1.0);
        assert!(matern52(1.0) < matern52(0.5));
        assert!((matern52(1.0) - (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp()).abs() < 1e-15);
    }

    #[test]
    fn interpolates_training_points() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y = DVector::from_iterator(8, x.iter().map(|v| (6.0 * v[0]).sin()));
        let post = fit(x.clone(), &y, 1e-6).unwrap();
        for (xi, yi) in x.iter().zip(y.iter()) {
            let (mu, sd) = post.predict(xi);
            assert!((mu - yi).abs() < 1e-2, "{mu} vs {yi}");
            assert!(sd < 0.1);
        }
    }

    #[test]
    fn quadratic_1d_converges_in_30_trials() {
        // f(x) = -(x - 0.37)^2, maximum 0 at x = 0.37
        let space = ParamSpace::new(vec![("x", Domain::Float { low: 0.0, high: 1.0 })]);
        let gp = GpSampler::default();
        for seed in 0..3 {
            let mut hist: Vec<Observation> = Vec::new();
            for _ in 0..30 {
                let p = gp.suggest(&space, &hist, seed);
                assert!(space.contains(&p));
                let x = match p[0] {
                    Value::Float(x) => x,
                    _ => unreachable!(),
                };
                hist.push(Observation { point: p, value: -(x - 0.37).powi(2) });
            }
            let best = hist.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
            assert!(best >= -1e-2, "seed {seed}: best {best}");
            assert!(best >= -1e-4, "seed {seed}: best {best}");
        }
    }

    #[test]
    fn degenerate_history_falls_back_to_random() {
        let space = ParamSpace::new(vec![("x", Domain::Float { low: 0.0, high: 1.0 })]);
        let hist: Vec<Observation> = (0..12)
            .map(|i| Observation {
                point: vec![Value::Float(i as f64 / 12.0)],
                value: 1.0,
            })
            .collect();
        assert_eq!(GpSampler::default().suggest(&space, &hist, 3), random_point(&space, 12, 3));
    }
}
