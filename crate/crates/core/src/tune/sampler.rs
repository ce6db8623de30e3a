//! Sampler interface plus the random and quasi-random samplers.
//!
//! Samplers are stateless: a suggestion is a pure function of the space, the
//! history so far and the study seed. Resuming a study from its log therefore
//! reproduces an uninterrupted run.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gp::GpSampler;
use super::sobol::Sobol;
use super::space::{ParamSpace, Point};
use super::tpe::TpeSampler;
use crate::error::{Error, Result};

/// One evaluated point. Samplers maximize `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: Point,
    pub value: f64,
}

pub trait Sampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn suggest(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Point;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for (study seed, trial number, purpose).
pub(crate) fn stream_rng(seed: u64, trial: usize, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ purpose.rotate_left(17)) ^ trial as u64))
}

const STREAM_RANDOM: u64 = 1;
const STREAM_SHIFT: u64 = 2;

/// The point a random sampler draws at `trial`; adaptive samplers reuse it
/// for their start-up phase.
pub(crate) fn random_point(space: &ParamSpace, trial: usize, seed: u64) -> Point {
    space.sample(&mut stream_rng(seed, trial, STREAM_RANDOM))
}

/// A Sobol generator whose digital shift is fixed by `seed` and `purpose`.
pub(crate) fn shifted_sobol(dim: usize, seed: u64, purpose: u64) -> Sobol {
    let mut rng = stream_rng(seed, 0, STREAM_SHIFT ^ purpose);
    let shift = (0..dim).map(|_| rng.gen::<u32>()).collect();
    Sobol::with_shift(dim, shift).expect("search space exceeds Sobol dimensions")
}

/// Each parameter drawn uniformly and independently.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSampler;

impl Sampler for RandomSampler {
    fn name(&self) -> &'static str {
        "random"
    }

    fn suggest(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Point {
        random_point(space, history.len(), seed)
    }
}

/// Successive points of a digitally shifted Sobol sequence.
#[derive(Debug, Clone, Copy, Default)]
pub struct QmcSampler;

impl Sampler for QmcSampler {
    fn name(&self) -> &'static str {
        "qmc"
    }

    fn suggest(&self, space: &ParamSpace, history: &[Observation], seed: u64) -> Point {
        let sobol = shifted_sobol(space.dim(), seed, 0);
        space.from_unit(&sobol.point(history.len() as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Random,
    Qmc,
    Tpe,
    Gp,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [SamplerKind::Random, SamplerKind::Qmc, SamplerKind::Tpe, SamplerKind::Gp];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Qmc => "qmc",
            SamplerKind::Tpe => "tpe",
            SamplerKind::Gp => "gp",
        }
    }

    /// The sampler with default settings.
    pub fn build(&self) -> Box<dyn Sampler> {
        match self {
            SamplerKind::Random => Box::new(RandomSampler),
            SamplerKind::Qmc => Box::new(QmcSampler),
            SamplerKind::Tpe => Box::new(TpeSampler::default()),
            SamplerKind::Gp => Box::new(GpSampler::default()),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(SamplerKind::Random),
            "qmc" => Ok(SamplerKind::Qmc),
            "tpe" => Ok(SamplerKind::Tpe),
            "gp" => Ok(SamplerKind::Gp),
            other => Err(Error::InvalidConfig(format!(
                "unknown sampler {other:?} (expected random, qmc, tpe or gp)"
            ))),
        }
    }
}
