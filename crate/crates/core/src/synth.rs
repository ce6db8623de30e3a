//! Seeded synthetic record-linkage datasets.
//!
//! E1 is made of families of similar products; every family shares brand,
//! category and most title words. E2 holds noisy copies of some E1 entities
//! plus noisy copies of family members that never made it into E1. Larger
//! datasets get larger families, so more near-duplicates compete for the
//! top neighbor slots and the useful `k` grows with size.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{EntityCollection, EntityProfile, GroundTruth};
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;

/// Attribute names shared by every generated dataset.
pub const SCHEMA: [&str; 5] = ["title", "brand", "category", "code", "description"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub name: String,
    pub n_left: usize,
    pub n_right: usize,
    pub n_matches: usize,
    pub family_size: usize,
    /// Per-character corruption probability for E2 copies.
    pub typo_rate: f64,
    /// Probability that an E2 copy loses one attribute value.
    pub drop_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// `n` entities per side, 80% of them matched, family size `1 + n / 100`.
    pub fn sized(name: impl Into<String>, n: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            n_left: n,
            n_right: n,
            n_matches: n * 4 / 5,
            family_size: 1 + n / 100,
            typo_rate: 0.1,
            drop_rate: 0.3,
            seed,
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        if rng.gen_bool(0.3) {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        }
    }
    w
}

fn vocabulary(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String], n: usize) -> Vec<&'a str> {
    (0..n).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect()
}

fn code(rng: &mut ChaCha8Rng) -> String {
    let letters: String = (0..2).map(|_| (b'A' + rng.gen_range(0..26)) as char).collect();
    format!("{letters}-{:04}", rng.gen_range(0..10_000))
}

#[derive(Clone)]
struct Product {
    title: Vec<String>,
    brand: String,
    category: String,
    code: String,
    description: Vec<String>,
}

impl Product {
    fn profile(&self, id: String) -> EntityProfile {
        EntityProfile::new(id)
            .with("title", self.title.join(" "))
            .with("brand", self.brand.clone())
            .with("category", self.category.clone())
            .with("code", self.code.clone())
            .with("description", self.description.join(" "))
    }
}

fn corrupt(rng: &mut ChaCha8Rng, text: &str, rate: f64) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c != ' ' && rng.gen_bool(rate) {
            match rng.gen_range(0..3) {
                0 => {}
                1 => out.push((b'a' + rng.gen_range(0..26)) as char),
                _ => {
                    out.push(c);
                    out.push(c);
                }
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn noisy_copy(rng: &mut ChaCha8Rng, p: &Product, cfg: &SynthConfig, id: String) -> EntityProfile {
    let mut title = p.title.clone();
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(0..title.len() - 1);
        title.swap(i, i + 1);
    }
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(0..title.len());
        title.remove(i);
    }
    let mut description = p.description.clone();
    description.retain(|_| rng.gen_bool(0.6));
    let mut values = vec![
        corrupt(rng, &title.join(" "), cfg.typo_rate),
        p.brand.clone(),
        p.category.clone(),
        corrupt(rng, &p.code, cfg.typo_rate),
        corrupt(rng, &description.join(" "), cfg.typo_rate),
    ];
    if rng.gen_bool(cfg.drop_rate) {
        let i = rng.gen_range(1..values.len());
        values[i].clear();
    }
    let mut e = EntityProfile::new(id);
    for (name, value) in SCHEMA.iter().zip(values) {
        e = e.with(*name, value);
    }
    e
}

/// Generates the dataset described by `cfg`. The output depends only on `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<DatasetBundle> {
    if cfg.n_left == 0 || cfg.n_right == 0 {
        return Err(Error::InvalidConfig("synthetic collections must be non-empty".into()));
    }
    if cfg.n_matches > cfg.n_left.min(cfg.n_right) {
        return Err(Error::InvalidConfig("more matches than entities".into()));
    }
    let family_size = cfg.family_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = vocabulary(&mut rng, 3000);
    let brands = vocabulary(&mut rng, 80);
    let categories = vocabulary(&mut rng, 12);

    // Families are generated until both E1 and the unmatched part of E2 can
    // be filled from distinct members.
    let extra = cfg.n_right - cfg.n_matches;
    let needed = cfg.n_left + extra;
    let mut members: Vec<Product> = Vec::with_capacity(needed + family_size);
    while members.len() < needed {
        let proto = Product {
            title: pick(&mut rng, &words, 4).into_iter().map(String::from).collect(),
            brand: brands[rng.gen_range(0..brands.len())].clone(),
            category: categories[rng.gen_range(0..categories.len())].clone(),
            code: String::new(),
            description: pick(&mut rng, &words, 8).into_iter().map(String::from).collect(),
        };
        let size = family_size + usize::from(extra > 0 && rng.gen_bool(extra as f64 / needed as f64));
        for _ in 0..size {
            let mut m = proto.clone();
            if rng.gen_bool(0.2) {
                let i = rng.gen_range(0..m.title.len());
                m.title[i] = words[rng.gen_range(0..words.len())].clone();
            }
            for d in m.description.iter_mut() {
                if rng.gen_bool(0.1) {
                    *d = words[rng.gen_range(0..words.len())].clone();
                }
            }
            m.code = code(&mut rng);
            members.push(m);
        }
    }

    // Interleave families so that E1 and the E2 extras both draw from all of them.
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.shuffle(&mut rng);
    let left_members = &order[..cfg.n_left];
    let extra_members = &order[cfg.n_left..cfg.n_left + extra];

    let mut e1: Vec<EntityProfile> = left_members
        .iter()
        .enumerate()
        .map(|(i, &m)| members[m].profile(format!("a{i}")))
        .collect();

    let mut matched: Vec<usize> = (0..cfg.n_left).collect();
    matched.shuffle(&mut rng);
    matched.truncate(cfg.n_matches);
    let mut e2 = Vec::with_capacity(cfg.n_right);
    let mut pairs = Vec::with_capacity(cfg.n_matches);
    let mut right_ids: Vec<usize> = (0..cfg.n_right).collect();
    right_ids.shuffle(&mut rng);
    for (j, &i) in matched.iter().enumerate() {
        let id = format!("b{}", right_ids[j]);
        e2.push(noisy_copy(&mut rng, &members[left_members[i]], cfg, id.clone()));
        pairs.push((format!("a{i}"), id));
    }
    for (j, &m) in extra_members.iter().enumerate() {
        let id = format!("b{}", right_ids[cfg.n_matches + j]);
        e2.push(noisy_copy(&mut rng, &members[m], cfg, id));
    }
    e1.shuffle(&mut rng);
    e2.shuffle(&mut rng);
    let (gt, _) = GroundTruth::from_pairs(pairs);
    DatasetBundle::new(
        cfg.name.clone(),
        EntityCollection::new("E1", e1)?,
        EntityCollection::new("E2", e2)?,
        Some(gt),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_bundle;

    #[test]
    fn sizes_and_validity() {
        let cfg = SynthConfig::sized("s", 120, 1);
        let b = generate(&cfg).unwrap();
        assert_eq!(b.e1.len(), 120);
        assert_eq!(b.e2.len(), 120);
        assert_eq!(b.gt.as_ref().unwrap().len(), 96);
        let report = validate_bundle(&b.e1, &b.e2, b.gt.as_ref());
        assert!(report.violations.is_empty());
        assert!(report.warnings.is_empty());
        for e in b.e1.entities().iter().chain(b.e2.entities()) {
            let names: Vec<&str> = e.attributes.iter().map(|(n, _)| n.as_str()).collect();
            assert_eq!(names, SCHEMA);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::sized("s", 80, 9);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.e1.entities(), b.e1.entities());
        assert_eq!(a.e2.entities(), b.e2.entities());
        assert_eq!(a.gt, b.gt);
        let c = generate(&SynthConfig::sized("s", 80, 10)).unwrap();
        assert_ne!(a.e1.entities(), c.e1.entities());
    }

    #[test]
    fn rejects_impossible_configs() {
        let mut cfg = SynthConfig::sized("s", 10, 0);
        cfg.n_matches = 11;
        assert!(generate(&cfg).is_err());
        cfg.n_left = 0;
        assert!(generate(&cfg).is_err());
    }
}
