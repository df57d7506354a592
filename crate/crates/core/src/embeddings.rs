//! Embedding vectors, the precomputed embedding store, and cosine similarity.
//!
//! Store file layout (UTF-8):
//!
//! ```text
//! dim=<N>\tmodel=<name>
//! <key>\t<v1> <v2> ... <vN>
//! ```
//!
//! Keys are normalized with [`normalize_key`] on load and on lookup.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use thiserror::Error;

use crate::text::normalize_key;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("empty vector")]
    Empty,
    #[error("no embedding stored for key `{0}`")]
    MissingEmbedding(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("embedding store line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("embedding store line {line}: expected {expected} values, found {found}")]
    RowDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding store line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `a·b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let norms = a.norm() * b.norm();
    if norms == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / norms).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    model_name: String,
    entries: HashMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, model_name: impl Into<String>) -> Self {
        Self {
            dim,
            model_name: model_name.into(),
            entries: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a vector under the normalized form of `key`, returning the
    /// previous vector if the key was already present.
    pub fn insert(
        &mut self,
        key: &str,
        vector: EmbeddingVector,
    ) -> Result<Option<EmbeddingVector>, EmbeddingError> {
        if vector.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        Ok(self.entries.insert(normalize_key(key), vector))
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.entries.get(&normalize_key(key))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let file = File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            EmbeddingError::Io { source, .. } => EmbeddingError::Io {
                path: path.to_owned(),
                source,
            },
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(io_err)?
            .ok_or_else(|| malformed(1, "missing header"))?;
        let (dim, model_name) = parse_header(&header)?;
        let mut store = Self::new(dim, model_name);

        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| malformed(line_no, "expected `<key>\\t<values>`"))?;
            let values = values
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| malformed(line_no, &format!("malformed float `{v}`")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() != dim {
                return Err(EmbeddingError::RowDimension {
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            let normalized = normalize_key(key);
            if normalized.is_empty() {
                return Err(malformed(line_no, "empty key"));
            }
            if store.entries.contains_key(&normalized) {
                return Err(EmbeddingError::DuplicateKey {
                    line: line_no,
                    key: normalized,
                });
            }
            store.entries.insert(normalized, EmbeddingVector { values });
        }
        Ok(store)
    }

    /// Writes the store with keys in sorted order. Floats are written in
    /// shortest round-trip form, so a reload is exact.
    pub fn write_to<W: Write>(&self, mut writer: W) -> io::Result<()> {
        writeln!(writer, "dim={}\tmodel={}", self.dim, self.model_name)?;
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        for key in keys {
            let values: Vec<String> = self.entries[key]
                .values
                .iter()
                .map(|v| v.to_string())
                .collect();
            writeln!(writer, "{key}\t{}", values.join(" "))?;
        }
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<(usize, String), EmbeddingError> {
    let mut dim = None;
    let mut model = None;
    for field in header.split('\t') {
        match field.split_once('=') {
            Some(("dim", v)) => {
                dim = Some(
                    v.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|d| *d > 0)
                        .ok_or_else(|| malformed(1, &format!("invalid dim `{v}`")))?,
                )
            }
            Some(("model", v)) => model = Some(v.to_owned()),
            _ => return Err(malformed(1, &format!("unexpected header field `{field}`"))),
        }
    }
    match (dim, model) {
        (Some(dim), Some(model)) => Ok((dim, model)),
        _ => Err(malformed(1, "header must be `dim=<N>\\tmodel=<name>`")),
    }
}

fn malformed(line: usize, message: &str) -> EmbeddingError {
    EmbeddingError::Malformed {
        line,
        message: message.to_owned(),
    }
}

fn io_err(source: io::Error) -> EmbeddingError {
    EmbeddingError::Io {
        path: PathBuf::new(),
        source,
    }
}

/// Where embeddings come from: a precomputed store, or a deterministic
/// character 3-gram hashing embedder that needs no model.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    Store(EmbeddingStore),
    Fallback { dim: usize },
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Store(store) => store.dim(),
            EmbeddingProvider::Fallback { dim } => *dim,
        }
    }

    pub fn model_name(&self) -> String {
        match self {
            EmbeddingProvider::Store(store) => store.model_name().to_owned(),
            EmbeddingProvider::Fallback { dim } => format!("fallback-trigram-{dim}"),
        }
    }

    pub fn embed(&self, text: &str) -> Result<Cow<'_, EmbeddingVector>, EmbeddingError> {
        let key = normalize_key(text);
        if key.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        match self {
            EmbeddingProvider::Store(store) => store
                .entries
                .get(&key)
                .map(Cow::Borrowed)
                .ok_or(EmbeddingError::MissingEmbedding(key)),
            EmbeddingProvider::Fallback { dim } => Ok(Cow::Owned(trigram_vector(&key, *dim))),
        }
    }
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Signed-count hashing of character 3-grams (with a boundary space on each
/// side), L2-normalized.
fn trigram_vector(key: &str, dim: usize) -> EmbeddingVector {
    assert!(dim > 0, "fallback dimension must be positive");
    let chars: Vec<char> = std::iter::once(' ')
        .chain(key.chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut values = vec![0.0; dim];
    let mut gram = String::new();
    for window in chars.windows(3) {
        gram.clear();
        gram.extend(window);
        let hash = fnv(gram.as_bytes());
        let bucket = (hash % dim as u64) as usize;
        values[bucket] += if hash >> 63 == 1 { -1.0 } else { 1.0 };
    }
    // counts can cancel out exactly; keep the vector usable for cosine
    if values.iter().all(|v| *v == 0.0) {
        values[(fnv(key.as_bytes()) % dim as u64) as usize] = 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector { values }
}
