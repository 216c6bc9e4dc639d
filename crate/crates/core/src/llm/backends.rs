use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, GenerationRecord, GenerationRequest, LlmError};
use crate::http::{EndpointConfig, HttpError, JsonClient};

/// Deterministic offline backend.
///
/// Returns the fixture target for the query source when one is registered,
/// otherwise a string derived from the prompt digest. Counts calls so tests
/// can assert how many prompts actually reached a backend.
#[derive(Debug, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    constant: Option<String>,
    fail_after: Option<usize>,
    calls: AtomicUsize,
}

impl MockBackend {
    /// Source sentence -> output to return.
    pub fn with_fixtures(fixtures: HashMap<String, String>) -> Self {
        Self { fixtures, ..Self::default() }
    }

    /// Returns `output` for every prompt.
    pub fn constant(output: impl Into<String>) -> Self {
        Self { constant: Some(output.into()), ..Self::default() }
    }

    /// Fails with a transport error once `n` calls have succeeded. Used to
    /// simulate an interrupted run.
    pub fn failing_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_after.is_some_and(|limit| n >= limit) {
            return Err(LlmError::Http(HttpError::Transport {
                url: "mock://".into(),
                message: "simulated outage".into(),
            }));
        }
        if let Some(c) = &self.constant {
            return Ok(c.clone());
        }
        Ok(match self.fixtures.get(&req.bundle.query_source) {
            Some(t) => t.clone(),
            None => format!("mock-{}", &req.prompt_hash[..16]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub prompt_hash: String,
    pub raw_output: String,
}

/// Serves recorded outputs keyed by prompt hash.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    outputs: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_fixtures(fixtures: impl IntoIterator<Item = ReplayFixture>) -> Self {
        Self { outputs: fixtures.into_iter().map(|f| (f.prompt_hash, f.raw_output)).collect() }
    }

    /// Reads a line-JSON fixture file of `{"prompt_hash", "raw_output"}`.
    pub fn load(path: &Path) -> io::Result<Self> {
        let mut fixtures = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: ReplayFixture = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            fixtures.push(f);
        }
        Ok(Self::from_fixtures(fixtures))
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        self.outputs.get(req.prompt_hash).cloned().ok_or_else(|| LlmError::ReplayMiss(req.prompt_hash.to_owned()))
    }
}

/// Writes records as a replay fixture file, sorted by prompt hash.
pub fn write_replay_fixtures(path: &Path, records: &[GenerationRecord]) -> io::Result<()> {
    let mut fixtures: Vec<ReplayFixture> = records
        .iter()
        .map(|r| ReplayFixture { prompt_hash: r.prompt_hash.clone(), raw_output: r.raw_output.clone() })
        .collect();
    fixtures.sort_by(|a, b| a.prompt_hash.cmp(&b.prompt_hash));
    fixtures.dedup_by(|a, b| a.prompt_hash == b.prompt_hash);
    let mut buf = Vec::new();
    for f in &fixtures {
        serde_json::to_writer(&mut buf, f).map_err(io::Error::other)?;
        buf.write_all(b"\n")?;
    }
    crate::util::write_atomic(path, &buf)
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible `POST {base_url}/v1/chat/completions` backend.
#[derive(Debug, Clone)]
pub struct LiveBackend {
    client: JsonClient,
}

impl LiveBackend {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self { client: JsonClient::new(endpoint) }
    }
}

fn is_context_overflow(status: u16, body: &str) -> bool {
    const NEEDLES: [&str; 6] = [
        "context_length_exceeded",
        "context length",
        "maximum context",
        "context window",
        "prompt is too long",
        "too many tokens",
    ];
    let body = body.to_lowercase();
    matches!(status, 400 | 413 | 422) && NEEDLES.iter().any(|n| body.contains(n))
}

impl Backend for LiveBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }

    fn complete(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: req.model_id,
            messages: req
                .bundle
                .messages
                .iter()
                .map(|m| WireMessage { role: m.role().as_str(), content: m.content() })
                .collect(),
            // greedy decoding when sampling is disabled
            temperature: if req.params.do_sample { req.params.temperature } else { 0.0 },
            max_tokens: req.params.max_new_tokens,
            seed: req.params.seed,
        };
        let resp: ChatResponse = self.client.post("v1/chat/completions", &body).map_err(|e| match e {
            HttpError::Status { status, body, .. } if is_context_overflow(status, &body) => {
                LlmError::ContextOverflow(body)
            }
            other => LlmError::Http(other),
        })?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| LlmError::BadResponse("response has no choices".into()))
    }
}
