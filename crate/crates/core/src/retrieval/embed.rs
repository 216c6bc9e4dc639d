//! Embedding providers and the batching/normalization front end.

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RetrievalError};
use crate::http::{EndpointConfig, JsonClient};
use crate::util;

/// Source of raw (not necessarily normalized) sentence embeddings.
pub trait EmbeddingProvider: Send + Sync {
    /// Identifier recorded in datastores, e.g. the embedding model name.
    fn provider_id(&self) -> &str;

    /// Output dimension when known ahead of time.
    fn dimension(&self) -> Option<usize> {
        None
    }

    /// One raw vector per input text, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError>;
}

/// Deterministic hashed bag-of-words embedder for tests and offline runs.
///
/// NOT semantic: texts are lowercased and split on whitespace, each token is
/// hashed with 64-bit FNV-1a into one of `dimension` buckets, and the bucket
/// counts form the vector. Only lexical overlap is captured.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dimension: usize,
    id: String,
}

impl HashedBagOfWords {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, id: format!("hashed-bow-{dimension}") }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dimension];
        for token in text.split_whitespace() {
            let h = fnv1a64(token.to_lowercase().as_bytes());
            v[(h % self.dimension as u64) as usize] += 1.0;
        }
        v
    }
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedBagOfWords {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

/// Client for an OpenAI-style `POST {base_url}/v1/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    client: JsonClient,
    model: String,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: EndpointConfig, model: impl Into<String>) -> Self {
        Self { client: JsonClient::new(endpoint), model: model.into() }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        let resp: EmbeddingResponse =
            self.client.post("v1/embeddings", &EmbeddingRequest { model: &self.model, input: texts })?;
        if resp.data.len() != texts.len() {
            return Err(RetrievalError::WrongCount { expected: texts.len(), got: resp.data.len() });
        }
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for d in resp.data {
            match slots.get_mut(d.index) {
                Some(slot @ None) => *slot = Some(d.embedding),
                _ => return Err(RetrievalError::Provider(format!("bad or repeated embedding index {}", d.index))),
            }
        }
        Ok(slots.into_iter().map(|s| s.expect("all indices present")).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Maximum concurrent batch requests.
    pub parallelism: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self { batch_size: 64, parallelism: 4 }
    }
}

/// Embeds `texts` in batches, L2-normalizing every vector locally and
/// checking count and dimension consistency across batches.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    opts: EmbedOptions,
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let batches: Vec<&[String]> = texts.chunks(opts.batch_size.max(1)).collect();
    let results = util::bounded_map(&batches, opts.parallelism, |batch| {
        let raw = provider.embed_batch(batch)?;
        if raw.len() != batch.len() {
            return Err(RetrievalError::WrongCount { expected: batch.len(), got: raw.len() });
        }
        Ok(raw)
    });
    let mut expected = provider.dimension();
    let mut out = Vec::with_capacity(texts.len());
    for batch in results {
        for raw in batch? {
            match expected {
                Some(d) if d != raw.len() => {
                    return Err(RetrievalError::DimensionMismatch { expected: d, got: raw.len() })
                }
                None => expected = Some(raw.len()),
                _ => {}
            }
            out.push(EmbeddingVector::normalized(raw)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn texts(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hashed_provider_is_deterministic() {
        let p = HashedBagOfWords::default();
        let a = embed_texts(&p, &texts(&["x"]), EmbedOptions::default()).unwrap();
        let b = embed_texts(&p, &texts(&["x"]), EmbedOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].dimension(), 256);
    }

    #[test]
    fn batch_matches_single_calls() {
        let p = HashedBagOfWords::default();
        let xs = texts(&["the cat sat", "a dog ran", "the cat ran"]);
        let batched = embed_texts(&p, &xs, EmbedOptions { batch_size: 2, parallelism: 2 }).unwrap();
        for (i, t) in xs.iter().enumerate() {
            let single = embed_texts(&p, std::slice::from_ref(t), EmbedOptions::default()).unwrap();
            assert_eq!(batched[i], single[0]);
        }
    }

    struct Scripted {
        dims: Vec<usize>,
        calls: AtomicUsize,
        short: bool,
    }

    impl EmbeddingProvider for Scripted {
        fn provider_id(&self) -> &str {
            "scripted"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            let d = self.dims[call.min(self.dims.len() - 1)];
            let n = if self.short { texts.len() - 1 } else { texts.len() };
            Ok((0..n).map(|_| vec![3.0; d]).collect())
        }
    }

    #[test]
    fn output_is_normalized_provider_output() {
        let p = Scripted { dims: vec![4], calls: AtomicUsize::new(0), short: false };
        let v = embed_texts(&p, &texts(&["a"]), EmbedOptions::default()).unwrap();
        assert_eq!(v[0].values(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn dimension_change_mid_stream_fails() {
        let p = Scripted { dims: vec![4, 5], calls: AtomicUsize::new(0), short: false };
        let r = embed_texts(&p, &texts(&["a", "b", "c"]), EmbedOptions { batch_size: 1, parallelism: 1 });
        assert!(matches!(r, Err(RetrievalError::DimensionMismatch { expected: 4, got: 5 })));
    }

    #[test]
    fn wrong_count_is_reported() {
        let p = Scripted { dims: vec![4], calls: AtomicUsize::new(0), short: true };
        let r = embed_texts(&p, &texts(&["a", "b"]), EmbedOptions::default());
        assert!(matches!(r, Err(RetrievalError::WrongCount { expected: 2, got: 1 })));
    }

    #[test]
    fn http_provider_speaks_embeddings_protocol() {
        // deliberately out of order: the client must reorder by `index`
        let server = testing::serve(vec![(
            200,
            r#"{"data": [{"index": 1, "embedding": [0.0, 2.0]}, {"index": 0, "embedding": [3.0, 4.0]}]}"#.into(),
        )]);
        let mut cfg = EndpointConfig::new(server.base_url.clone());
        cfg.retries = 0;
        let p = HttpEmbeddingProvider::new(cfg, "all-MiniLM-L12-v2");
        let v = embed_texts(&p, &texts(&["first", "second"]), EmbedOptions::default()).unwrap();
        assert_eq!(v[0].values(), &[0.6, 0.8]);
        assert_eq!(v[1].values(), &[0.0, 1.0]);
        let reqs = server.requests.lock().unwrap();
        assert_eq!(reqs[0].path, "/v1/embeddings");
        assert_eq!(reqs[0].body["model"], "all-MiniLM-L12-v2");
        assert_eq!(reqs[0].body["input"], serde_json::json!(["first", "second"]));
    }

    #[test]
    fn http_provider_checks_count() {
        let server = testing::serve(vec![(200, r#"{"data": [{"index": 0, "embedding": [1.0]}]}"#.into())]);
        let mut cfg = EndpointConfig::new(server.base_url.clone());
        cfg.retries = 0;
        let p = HttpEmbeddingProvider::new(cfg, "m");
        let r = embed_texts(&p, &texts(&["a", "b"]), EmbedOptions::default());
        assert!(matches!(r, Err(RetrievalError::WrongCount { expected: 2, got: 1 })));
    }
}
