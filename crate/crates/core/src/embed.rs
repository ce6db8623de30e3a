//! Entity vectorization: the built-in hashed character n-gram embedder and
//! replay of externally computed language-model vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::datamodel::{canonical_embedder_name, serialize_entity, EntityCollection, PRETRAINED_EMBEDDERS};
use crate::error::{Error, Result};

/// Unit-norm (or all-zero) rows, one per entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw rows, rescaling each non-zero row to unit length.
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for mut row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            normalize(&mut row);
            data.extend_from_slice(&row);
        }
        Ok(Self { ids, dim, data })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.ids.len())
    }
}

/// Scales `v` to unit L2 norm in place; an all-zero vector stays zero.
pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Seeded 64-bit FNV-1a with a splitmix finalizer.
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Character n-grams of the lowercased text, padded with one space at each end.
/// Texts shorter than `n` after padding yield a single gram.
pub fn char_ngrams(text: &str, n: usize) -> Vec<String> {
    let lower = text.trim().to_lowercase();
    if lower.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = std::iter::once(' ')
        .chain(lower.chars())
        .chain(std::iter::once(' '))
        .collect();
    if chars.len() <= n {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

/// Hashes character n-grams into `dim` signed buckets, weights them by term
/// frequency and L2-normalizes. Empty text gives the zero vector.
pub fn embed_hashed_ngrams(text: &str, dim: usize, n: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 8, "dim must be at least 8");
    assert!(n >= 2, "n must be at least 2");
    let mut v = vec![0.0; dim];
    for gram in char_ngrams(text, n) {
        let h = hash_bytes(gram.as_bytes(), seed);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    normalize(&mut v);
    v
}

/// Turns an entity collection into an embedding matrix.
pub trait Embedder: Send + Sync {
    fn embed(&self, c: &EntityCollection) -> Result<EmbeddingMatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEmbedder {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
}

impl Embedder for HashedNgramEmbedder {
    fn embed(&self, c: &EntityCollection) -> Result<EmbeddingMatrix> {
        let rows: Vec<Vec<f64>> = c
            .entities()
            .par_iter()
            .map(|e| embed_hashed_ngrams(&serialize_entity(e), self.dim, self.n, self.seed))
            .collect();
        EmbeddingMatrix::from_rows(c.ids().map(str::to_string).collect(), rows)
    }
}

/// Vectors computed elsewhere, keyed by entity id.
///
/// Keys may be qualified with the collection's source id (`E1:42`) when the
/// two collections share id values; qualified keys take precedence.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    pub name: String,
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

const BINARY_MAGIC: &[u8; 4] = b"AEEB";

impl EmbeddingTable {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.vectors.insert(key.into(), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Loads a text (`dim=<d>` header) or, for `.bin` paths, a binary vector file.
    pub fn load(path: &Path, name: &str) -> Result<Self> {
        if path.extension().and_then(|e| e.to_str()) == Some("bin") {
            Self::load_binary(path, name)
        } else {
            Self::load_text(path, name)
        }
    }

    fn load_text(path: &Path, name: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let ctx = |line: usize| format!("{}:{}", path.display(), line + 1);
        let dim = loop {
            let Some((no, line)) = lines.next() else {
                return Err(Error::parse(ctx(0), "missing dim=<d> header"));
            };
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let d = line
                .strip_prefix("dim=")
                .ok_or_else(|| Error::parse(ctx(no), "expected dim=<d> header"))?;
            break d
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(ctx(no), e))?;
        };
        let mut table = Self::new(name, dim);
        for (no, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(id) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::parse(ctx(no), e)))
                .collect::<Result<Vec<_>>>()?;
            table.insert(id, values)?;
        }
        Ok(table)
    }

    fn load_binary(path: &Path, name: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let ctx = path.display().to_string();
        let truncated = || Error::parse(&ctx, "truncated binary vector file");
        if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
            return Err(Error::parse(&ctx, "bad magic, expected AEEB"));
        }
        let read_u32 = |at: usize| -> Option<u32> {
            bytes.get(at..at + 4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let dim = read_u32(4).ok_or_else(truncated)? as usize;
        let mut table = Self::new(name, dim);
        let mut at = 8;
        while at < bytes.len() {
            let len = read_u32(at).ok_or_else(truncated)? as usize;
            at += 4;
            let id = bytes.get(at..at + len).ok_or_else(truncated)?;
            let id = std::str::from_utf8(id).map_err(|e| Error::parse(&ctx, e))?.to_string();
            at += len;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let b = bytes.get(at..at + 4).ok_or_else(truncated)?;
                v.push(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
                at += 4;
            }
            table.insert(id, v)?;
        }
        Ok(table)
    }

    /// Writes the text format with keys in sorted order.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let io = |e| Error::io(path, e);
        writeln!(w, "dim={}", self.dim).map_err(io)?;
        for k in keys {
            write!(w, "{k}").map_err(io)?;
            for x in &self.vectors[k] {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Writes the binary format (f32 little-endian components).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        for k in keys {
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            for &x in &self.vectors[k] {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn lookup(&self, source_id: &str, id: &str) -> Option<&Vec<f64>> {
        self.vectors
            .get(&format!("{source_id}:{id}"))
            .or_else(|| self.vectors.get(id))
    }

    /// Matrix for the given ids in order; fails on the first id without a vector.
    pub fn matrix_for<'a>(
        &self,
        source_id: &str,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<EmbeddingMatrix> {
        let mut out_ids = Vec::new();
        let mut rows = Vec::new();
        for id in ids {
            let v = self.lookup(source_id, id).ok_or_else(|| Error::MissingVector {
                name: self.name.clone(),
                id: id.to_string(),
            })?;
            out_ids.push(id.to_string());
            rows.push(v.clone());
        }
        EmbeddingMatrix::from_rows(out_ids, rows)
    }
}

impl Embedder for EmbeddingTable {
    fn embed(&self, c: &EntityCollection) -> Result<EmbeddingMatrix> {
        self.matrix_for(c.source_id(), c.ids())
    }
}

/// Built-in hashed n-gram embedders: `hash2` .. `hash5`.
pub const BUILTIN_EMBEDDERS: [(&str, usize); 4] =
    [("hash2", 2), ("hash3", 3), ("hash4", 4), ("hash5", 5)];

pub const BUILTIN_DIM: usize = 512;

/// Name → embedder map. Read-only once the study starts.
#[derive(Clone, Default)]
pub struct EmbedderRegistry {
    embedders: HashMap<String, Arc<dyn Embedder>>,
}

impl std::fmt::Debug for EmbedderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbedderRegistry")
            .field("names", &self.names())
            .finish()
    }
}

impl EmbedderRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for (name, n) in BUILTIN_EMBEDDERS {
            r.register(
                name,
                Arc::new(HashedNgramEmbedder {
                    dim: BUILTIN_DIM,
                    n,
                    seed: 0,
                }),
            );
        }
        r
    }

    pub fn register(&mut self, name: &str, embedder: Arc<dyn Embedder>) {
        self.embedders.insert(canonical_embedder_name(name), embedder);
    }

    pub fn register_table(&mut self, table: EmbeddingTable) {
        let name = table.name.clone();
        self.register(&name, Arc::new(table));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.embedders.contains_key(&canonical_embedder_name(name))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.embedders.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Embedder>> {
        let canonical = canonical_embedder_name(name);
        self.embedders.get(&canonical).ok_or(Error::UnknownEmbedder(canonical))
    }
}

/// Loads an external vector file, registers it under `name` and returns the
/// matrix for `ids` (looked up in collection `source_id`).
pub fn load_external_embeddings<'a>(
    registry: &mut EmbedderRegistry,
    path: &Path,
    name: &str,
    source_id: &str,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<EmbeddingMatrix> {
    let table = EmbeddingTable::load(path, &canonical_embedder_name(name))?;
    let matrix = table.matrix_for(source_id, ids)?;
    registry.register_table(table);
    Ok(matrix)
}

/// Embeds every entity of `c` with the embedder registered as `name`.
pub fn embed_collection(
    registry: &EmbedderRegistry,
    name: &str,
    c: &EntityCollection,
) -> Result<EmbeddingMatrix> {
    registry.get(name)?.embed(c)
}

/// True for the names of the pre-trained models, which need external vectors.
pub fn is_pretrained(name: &str) -> bool {
    PRETRAINED_EMBEDDERS.contains(&canonical_embedder_name(name).as_str())
}
