use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use super::RunnerError;
use crate::corpus::CorpusDescriptor;
use crate::http::EndpointConfig;
use crate::llm::{BackendKind, CleaningPolicy, SamplingParams};
use crate::prompt::{Condition, DemoOrder};

pub const ENV_BASE_URL: &str = "PIVOTMT_BASE_URL";
pub const ENV_API_KEY: &str = "PIVOTMT_API_KEY";
pub const ENV_EMBEDDINGS_URL: &str = "PIVOTMT_EMBEDDINGS_URL";

/// What the mock backend answers with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// The test reference for the query (perfect oracle).
    Oracle,
    /// A string derived from the prompt hash.
    #[default]
    Digest,
    /// Always the empty string.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default)]
    pub mock: MockMode,
    /// Replay fixture file (line-JSON `{prompt_hash, raw_output}`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_path: Option<PathBuf>,
    /// Live endpoint; `PIVOTMT_BASE_URL` / `PIVOTMT_API_KEY` fill the gaps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self { kind: BackendKind::Mock, mock: MockMode::default(), replay_path: None, endpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    /// Offline lexical embedder (not semantic).
    Hashed {
        #[serde(default = "default_hash_dim")]
        dimension: usize,
    },
    /// OpenAI-compatible `/v1/embeddings`; `PIVOTMT_EMBEDDINGS_URL` fills a
    /// missing endpoint.
    Http {
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<EndpointConfig>,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

fn default_hash_dim() -> usize {
    256
}

fn default_batch() -> usize {
    64
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hashed { dimension: default_hash_dim() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TokenizerSpec {
    Whitespace,
    Bpe {
        vocab: PathBuf,
        merges: PathBuf,
        #[serde(default)]
        word_prefix: String,
    },
    Remote {
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<EndpointConfig>,
    },
}

/// Externally produced reference scores, reported verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub system: String,
    pub bleu: f64,
    pub chrfpp: f64,
}

/// NLLB-200 distilled scores keyed by `src-tgt` language codes.
pub fn default_baselines() -> BTreeMap<String, Baseline> {
    let nllb = |bleu, chrfpp| Baseline { system: "NLLB-200".into(), bleu, chrfpp };
    BTreeMap::from([("eng-aeb".into(), nllb(4.20, 10.42)), ("eng-gom".into(), nllb(7.51, 26.82))])
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Condition>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Condition),
        Many(Vec<Condition>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) => v,
    })
}

fn default_conditions() -> Vec<Condition> {
    vec![Condition::Direct]
}

fn default_k_values() -> Vec<usize> {
    (0..=5).collect()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_in_flight() -> usize {
    4
}

/// One experiment: a corpus, a model and a grid of (condition, k) cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusDescriptor,
    /// Saved index; defaults to `<out_dir>/index.pvmt`, built when missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datastore: Option<PathBuf>,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub backend: BackendSpec,
    pub model_id: String,
    /// Name printed in tables; defaults to `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_conditions", deserialize_with = "one_or_many", alias = "condition")]
    pub conditions: Vec<Condition>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub cleaning: CleaningPolicy,
    #[serde(default)]
    pub demo_order: DemoOrder,
    /// Template label overrides, language code -> display name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_baselines")]
    pub baselines: BTreeMap<String, Baseline>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tokenizers: BTreeMap<String, TokenizerSpec>,
}

impl ExperimentConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(corpus: CorpusDescriptor, model_id: impl Into<String>) -> Self {
        Self {
            corpus,
            datastore: None,
            embedding: EmbeddingSpec::default(),
            backend: BackendSpec::default(),
            model_id: model_id.into(),
            model_name: None,
            conditions: default_conditions(),
            k_values: default_k_values(),
            sampling: SamplingParams::default(),
            cleaning: CleaningPolicy::default(),
            demo_order: DemoOrder::default(),
            labels: BTreeMap::new(),
            out_dir: default_out_dir(),
            seed: 0,
            max_in_flight: default_in_flight(),
            baselines: default_baselines(),
            tokenizers: BTreeMap::new(),
        }
    }

    /// Parses a TOML config. Relative paths are resolved against the
    /// directory containing the file.
    pub fn from_toml_file(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.corpus.train, &mut self.corpus.test, &mut self.corpus.file].into_iter().flatten() {
            fix(p);
        }
        if let Some(p) = &mut self.datastore {
            fix(p);
        }
        if let Some(p) = &mut self.backend.replay_path {
            fix(p);
        }
        fix(&mut self.out_dir);
        for t in self.tokenizers.values_mut() {
            if let TokenizerSpec::Bpe { vocab, merges, .. } = t {
                fix(vocab);
                fix(merges);
            }
        }
    }

    /// Fills missing live endpoints from the environment.
    pub fn apply_env(&mut self) {
        let key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            let ep = self.backend.endpoint.get_or_insert_with(|| EndpointConfig::new(url.clone()));
            if ep.base_url.is_empty() {
                ep.base_url = url;
            }
        }
        if let Some(ep) = &mut self.backend.endpoint {
            if ep.api_key.is_none() {
                ep.api_key = key.clone();
            }
        }
        if let EmbeddingSpec::Http { endpoint, .. } = &mut self.embedding {
            if endpoint.is_none() {
                if let Ok(url) = std::env::var(ENV_EMBEDDINGS_URL) {
                    let mut ep = EndpointConfig::new(url);
                    ep.api_key = key.clone();
                    *endpoint = Some(ep);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.k_values.is_empty() {
            return bad("k_values must not be empty".into());
        }
        if self.conditions.is_empty() {
            return bad("at least one condition is required".into());
        }
        if self.conditions.contains(&Condition::Pivot) && self.corpus.pivot_lang.is_none() {
            return bad(format!("pivot condition needs a pivot language on corpus `{}`", self.corpus.name));
        }
        if self.model_id.trim().is_empty() {
            return bad("model_id must not be empty".into());
        }
        match self.backend.kind {
            BackendKind::Replay if self.backend.replay_path.is_none() => {
                return bad("replay backend needs backend.replay_path".into())
            }
            BackendKind::Live if self.backend.endpoint.as_ref().is_none_or(|e| e.base_url.is_empty()) => {
                return bad(format!("live backend needs backend.endpoint.base_url or {ENV_BASE_URL}"))
            }
            _ => {}
        }
        self.sampling.validate().map_err(|e| RunnerError::Config(e.to_string()))
    }

    pub fn datastore_path(&self) -> PathBuf {
        self.datastore.clone().unwrap_or_else(|| self.out_dir.join("index.pvmt"))
    }

    pub fn model_name(&self) -> &str {
        self.model_name.as_deref().unwrap_or(&self.model_id)
    }

    /// SHA-256 over the behavioral settings. Output locations, endpoints and
    /// tokenizer setup are excluded so the same experiment digests equally
    /// wherever it is written or served from.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            corpus: &'a str,
            languages: (&'a str, Option<&'a str>, &'a str),
            embedding: String,
            backend: (BackendKind, MockMode),
            model_id: &'a str,
            conditions: &'a [Condition],
            k_values: &'a [usize],
            sampling: &'a SamplingParams,
            cleaning: CleaningPolicy,
            demo_order: DemoOrder,
            labels: &'a BTreeMap<String, String>,
            seed: u64,
        }
        let embedding = match &self.embedding {
            EmbeddingSpec::Hashed { dimension } => format!("hashed-bow-{dimension}"),
            EmbeddingSpec::Http { model, .. } => format!("http:{model}"),
        };
        let key = Key {
            corpus: &self.corpus.name,
            languages: (&self.corpus.source_lang, self.corpus.pivot_lang.as_deref(), &self.corpus.target_lang),
            embedding,
            backend: (self.backend.kind, self.backend.mock),
            model_id: &self.model_id,
            conditions: &self.conditions,
            k_values: &self.k_values,
            sampling: &self.sampling,
            cleaning: self.cleaning,
            demo_order: self.demo_order,
            labels: &self.labels,
            seed: self.seed,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("key serializes")))
    }
}
