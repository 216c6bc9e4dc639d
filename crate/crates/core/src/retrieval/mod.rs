//! Vector datastore over train-split English sources with exact cosine top-k
//! search.
//!
//! Vectors are L2-normalized on the way in, so cosine similarity is a plain
//! dot product. Search is a flat scan; hits are ordered by similarity
//! descending with ties broken by ascending triplet id.

mod embed;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{embed_texts, EmbedOptions, EmbeddingProvider, HashedBagOfWords, HttpEmbeddingProvider};

use crate::corpus::{Corpus, Triplet};
use crate::http::HttpError;
use crate::util;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} embeddings for {expected} inputs")]
    WrongCount { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding has zero norm and cannot be normalized")]
    ZeroNorm,
    #[error("index was built with provider `{found}`, but `{expected}` is configured")]
    ProviderMismatch { expected: String, found: String },
    #[error("unsupported index version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("unknown triplet id {0} in datastore")]
    UnknownTriplet(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Unit-length, finite embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `raw` to unit L2 norm (computed in f64).
    pub fn normalized(raw: Vec<f32>) -> Result<Self, RetrievalError> {
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        let norm = raw.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RetrievalError::ZeroNorm);
        }
        Ok(Self(raw.into_iter().map(|x| (f64::from(x) / norm) as f32).collect()))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

/// Dot product accumulated in f64, in index order.
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub triplet_id: u64,
    pub similarity: f64,
}

/// Ranking order: similarity descending, then triplet id ascending.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.triplet_id.cmp(&b.triplet_id))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

/// Immutable embedding index over a corpus train split.
#[derive(Debug, Clone, PartialEq)]
pub struct Datastore {
    corpus_name: String,
    provider_id: String,
    dimension: usize,
    ids: Vec<u64>,
    /// Row-major `ids.len() × dimension`.
    vectors: Vec<f32>,
    triplets: Vec<Triplet>,
    by_id: HashMap<u64, usize>,
}

impl Datastore {
    pub fn new(
        corpus_name: impl Into<String>,
        provider_id: impl Into<String>,
        dimension: usize,
        triplets: Vec<Triplet>,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self, RetrievalError> {
        if triplets.len() != vectors.len() {
            return Err(RetrievalError::WrongCount { expected: triplets.len(), got: vectors.len() });
        }
        let mut flat = Vec::with_capacity(vectors.len() * dimension);
        for v in &vectors {
            if v.dimension() != dimension {
                return Err(RetrievalError::DimensionMismatch { expected: dimension, got: v.dimension() });
            }
            flat.extend_from_slice(v.values());
        }
        Self::from_parts(corpus_name.into(), provider_id.into(), dimension, triplets, flat)
    }

    fn from_parts(
        corpus_name: String,
        provider_id: String,
        dimension: usize,
        triplets: Vec<Triplet>,
        vectors: Vec<f32>,
    ) -> Result<Self, RetrievalError> {
        let ids: Vec<u64> = triplets.iter().map(|t| t.id).collect();
        let mut by_id = HashMap::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if by_id.insert(id, i).is_some() {
                return Err(RetrievalError::Corrupt(format!("duplicate triplet id {id}")));
            }
        }
        Ok(Self { corpus_name, provider_id, dimension, ids, vectors, triplets, by_id })
    }

    pub fn corpus_name(&self) -> &str {
        &self.corpus_name
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn triplet(&self, id: u64) -> Option<&Triplet> {
        self.by_id.get(&id).map(|&i| &self.triplets[i])
    }

    pub fn vector(&self, id: u64) -> Option<&[f32]> {
        self.by_id.get(&id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Exact top-k by cosine similarity. `k` larger than the store is
    /// clamped (with a warning).
    pub fn retrieve_topk(&self, query: &EmbeddingVector, k: usize) -> Result<RetrievalResult, RetrievalError> {
        if self.is_empty() || k == 0 {
            return Ok(RetrievalResult::default());
        }
        if query.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { expected: self.dimension, got: query.dimension() });
        }
        if k > self.len() {
            log::warn!("k={k} exceeds datastore size {}; clamping", self.len());
        }
        let k = k.min(self.len());
        let mut hits: Vec<Hit> = (0..self.len())
            .map(|i| Hit { triplet_id: self.ids[i], similarity: dot(self.row(i), query.values()) })
            .collect();
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(rank_order);
        Ok(RetrievalResult { hits })
    }

    /// Persists the datastore (crash-safe replace).
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        util::write_atomic(path, &self.encode())?;
        Ok(())
    }

    /// Loads a datastore, checking integrity and, when given, that it was
    /// built with `expected_provider`.
    pub fn load(path: &Path, expected_provider: Option<&str>) -> Result<Self, RetrievalError> {
        let store = Self::decode(&fs::read(path)?)?;
        if let Some(expected) = expected_provider {
            if expected != store.provider_id {
                return Err(RetrievalError::ProviderMismatch {
                    expected: expected.to_owned(),
                    found: store.provider_id,
                });
            }
        }
        Ok(store)
    }
}

/// Embeds the corpus train sources and builds a datastore over them. The
/// test split is never indexed.
pub fn build_index(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<Datastore, RetrievalError> {
    let sources: Vec<String> = corpus.train().iter().map(|t| t.source.clone()).collect();
    let vectors = embed_texts(provider, &sources, opts)?;
    let dimension = vectors.first().map(EmbeddingVector::dimension).or(provider.dimension()).unwrap_or(0);
    Datastore::new(corpus.name(), provider.provider_id(), dimension, corpus.train().to_vec(), vectors)
}

// Index file layout (all integers little-endian):
//
//   magic   8 bytes  "PVMTIDX\0"
//   version u32
//   header  u64 length + JSON {corpus_name, provider_id, dimension, count}
//   corpus  u64 length + canonical triplet lines
//   vectors count × dimension × f32, in triplet order
//   sha256  32 bytes over everything above
const MAGIC: &[u8; 8] = b"PVMTIDX\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    corpus_name: String,
    provider_id: String,
    dimension: usize,
    count: usize,
}

impl Datastore {
    fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&IndexHeader {
            corpus_name: self.corpus_name.clone(),
            provider_id: self.provider_id.clone(),
            dimension: self.dimension,
            count: self.len(),
        })
        .expect("header serializes");
        let mut lines = String::new();
        for t in &self.triplets {
            lines.push_str(&t.to_line());
            lines.push('\n');
        }
        let mut out = Vec::with_capacity(64 + header.len() + lines.len() + self.vectors.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(lines.len() as u64).to_le_bytes());
        out.extend_from_slice(lines.as_bytes());
        for x in &self.vectors {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let corrupt = |m: &str| RetrievalError::Corrupt(m.to_owned());
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(RetrievalError::VersionMismatch { found: version, supported: VERSION });
        }
        let header_len = r.take_u64()? as usize;
        let header: IndexHeader =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| corrupt(&format!("header: {e}")))?;
        let corpus_len = r.take_u64()? as usize;
        let lines = std::str::from_utf8(r.take(corpus_len)?).map_err(|_| corrupt("triplets are not UTF-8"))?;
        let triplets = lines
            .lines()
            .map(|l| serde_json::from_str::<Triplet>(l).map_err(|e| corrupt(&format!("triplet: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if triplets.len() != header.count {
            return Err(corrupt("triplet count disagrees with header"));
        }
        let n = header.count.checked_mul(header.dimension).ok_or_else(|| corrupt("size overflow"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("size overflow"))?)?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let vectors = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_parts(header.corpus_name, header.provider_id, header.dimension, triplets, vectors)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RetrievalError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| RetrievalError::Corrupt("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn take_u64(&mut self) -> Result<u64, RetrievalError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
