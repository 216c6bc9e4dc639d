//! Hypothesis generation from prompt bundles.
//!
//! Three backends share the [`Backend`] trait: a live chat-completions client,
//! a deterministic mock, and a replay backend serving recorded outputs by
//! prompt hash. [`Generator`] adds the persistent cache and the bounded
//! worker pool on top.

mod backends;
mod cache;
mod clean;

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backends::{write_replay_fixtures, LiveBackend, MockBackend, ReplayBackend, ReplayFixture};
pub use cache::{GenerationCache, CACHE_FILE};
pub use clean::{clean_hypothesis, CleaningPolicy};

use crate::http::HttpError;
use crate::prompt::{render_chatml, PromptBundle, PromptError};
use crate::util;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("endpoint rejected the prompt as too long: {0}")]
    ContextOverflow(String),
    #[error("no recorded output for prompt hash {0}")]
    ReplayMiss(String),
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("unexpected endpoint response: {0}")]
    BadResponse(String),
    #[error("generation cache: {0}")]
    Cache(#[from] io::Error),
}

fn default_temperature() -> f64 {
    0.1
}

fn default_max_new_tokens() -> u32 {
    200
}

fn default_one() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

/// Decoding parameters. Defaults: temperature 0.1, 200 new tokens, sampling
/// on, one returned sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_one")]
    pub num_return_sequences: u32,
    #[serde(default = "default_true")]
    pub do_sample: bool,
    /// Forwarded to endpoints that support it; never relied on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            max_new_tokens: default_max_new_tokens(),
            num_return_sequences: 1,
            do_sample: true,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidParams(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_new_tokens < 1 {
            return Err(LlmError::InvalidParams("max_new_tokens must be >= 1".into()));
        }
        if self.num_return_sequences != 1 {
            return Err(LlmError::InvalidParams("num_return_sequences must be 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
    Replay,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Live => "live",
            BackendKind::Mock => "mock",
            BackendKind::Replay => "replay",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendKind::Live),
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend `{other}` (expected live, mock or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: u64,
    pub model_id: String,
    pub prompt_hash: String,
    pub raw_output: String,
    pub hypothesis: String,
    pub cleaning: CleaningPolicy,
    pub backend: BackendKind,
    pub timestamp_ms: u64,
}

/// Everything a backend may look at for one call.
pub struct GenerationRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub rendered: &'a str,
    pub params: &'a SamplingParams,
    pub model_id: &'a str,
    pub prompt_hash: &'a str,
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, LlmError>;
}

/// SHA-256 (hex) over the rendered prompt, sampling parameters and model id.
pub fn prompt_hash(rendered: &str, params: &SamplingParams, model_id: &str) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: &'a str,
        params: &'a SamplingParams,
        prompt: &'a str,
    }
    let key = serde_json::to_vec(&Key { model: model_id, params, prompt: rendered }).expect("key serializes");
    hex::encode(Sha256::digest(&key))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// One uncached generation call.
pub fn generate(
    backend: &dyn Backend,
    bundle: &PromptBundle,
    params: &SamplingParams,
    model_id: &str,
    policy: CleaningPolicy,
) -> Result<GenerationRecord, LlmError> {
    params.validate()?;
    bundle.validate()?;
    let rendered = render_chatml(bundle);
    let hash = prompt_hash(&rendered, params, model_id);
    let raw = backend.complete(&GenerationRequest {
        bundle,
        rendered: &rendered,
        params,
        model_id,
        prompt_hash: &hash,
    })?;
    Ok(GenerationRecord {
        query_id: bundle.query_id,
        model_id: model_id.to_owned(),
        prompt_hash: hash,
        hypothesis: clean_hypothesis(&raw, policy),
        raw_output: raw,
        cleaning: policy,
        backend: backend.kind(),
        timestamp_ms: now_ms(),
    })
}

/// Backend plus cache, sampling configuration and worker-pool limit.
pub struct Generator {
    backend: Arc<dyn Backend>,
    cache: Option<Arc<GenerationCache>>,
    params: SamplingParams,
    model_id: String,
    policy: CleaningPolicy,
    max_in_flight: usize,
}

impl Generator {
    pub fn new(backend: Arc<dyn Backend>, params: SamplingParams, model_id: impl Into<String>) -> Self {
        Self {
            backend,
            cache: None,
            params,
            model_id: model_id.into(),
            policy: CleaningPolicy::Default,
            max_in_flight: 4,
        }
    }

    pub fn with_cache(mut self, cache: Arc<GenerationCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_policy(mut self, policy: CleaningPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn policy(&self) -> CleaningPolicy {
        self.policy
    }

    pub fn cache(&self) -> Option<&GenerationCache> {
        self.cache.as_deref()
    }

    /// Cached generation: a hit never reaches the backend; a miss is
    /// persisted before it is returned.
    pub fn generate(&self, bundle: &PromptBundle) -> Result<GenerationRecord, LlmError> {
        if let Some(cache) = &self.cache {
            let rendered = render_chatml(bundle);
            let hash = prompt_hash(&rendered, &self.params, &self.model_id);
            if let Some(mut hit) = cache.get(&hash) {
                if hit.cleaning != self.policy {
                    hit.hypothesis = clean_hypothesis(&hit.raw_output, self.policy);
                    hit.cleaning = self.policy;
                }
                return Ok(hit);
            }
        }
        let record = generate(self.backend.as_ref(), bundle, &self.params, &self.model_id, self.policy)?;
        if let Some(cache) = &self.cache {
            cache.put(&record)?;
        }
        Ok(record)
    }

    /// Generates for every bundle with at most `max_in_flight` concurrent
    /// calls; results keep input order.
    pub fn generate_all(&self, bundles: &[PromptBundle]) -> Vec<Result<GenerationRecord, LlmError>> {
        util::bounded_map(bundles, self.max_in_flight, |b| self.generate(b))
    }
}
