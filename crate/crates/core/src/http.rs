//! Minimal blocking JSON-over-HTTP client shared by the embedding, chat and
//! tokenizer endpoints. Transport errors, 429 and 5xx responses are retried
//! with exponential backoff; other statuses are returned to the caller.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error calling {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} returned HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("could not decode response from {url}: {message}")]
    Decode { url: String, message: String },
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Decode { .. } => false,
        }
    }
}

fn default_timeout_secs() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    config: EndpointConfig,
}

impl JsonClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// POSTs `body` to `{base_url}/{path}` and decodes the JSON reply,
    /// retrying retryable failures up to the configured count.
    pub fn post<B, R>(&self, path: &str, body: &B) -> Result<R, HttpError>
    where
        B: Serialize,
        R: DeserializeOwned,
    {
        let url = self.config.url(path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{e}; retrying in {wait} ms ({}/{})", attempt + 1, self.config.retries);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<B, R>(&self, url: &str, body: &B) -> Result<R, HttpError>
    where
        B: Serialize,
        R: DeserializeOwned,
    {
        let transport = |e: ureq::Error| HttpError::Transport { url: url.to_owned(), message: e.to_string() };
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(body).map_err(|e| HttpError::Decode {
            url: url.to_owned(),
            message: format!("request serialization: {e}"),
        })?;
        let mut resp = req.send(&payload[..]).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(HttpError::Status { url: url.to_owned(), status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Decode { url: url.to_owned(), message: e.to_string() })
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn quick(base: &str, retries: u32) -> JsonClient {
        let mut cfg = EndpointConfig::new(base);
        cfg.retries = retries;
        cfg.backoff_ms = 1;
        cfg.timeout_secs = 5.0;
        cfg.api_key = Some("secret".into());
        JsonClient::new(cfg)
    }

    #[test]
    fn posts_json_with_auth() {
        let server = testing::serve(vec![(200, r#"{"ok": true}"#.into())]);
        let r: serde_json::Value = quick(&server.base_url, 0).post("/v1/x", &serde_json::json!({"a": 1})).unwrap();
        assert_eq!(r["ok"], true);
        let reqs = server.requests.lock().unwrap();
        assert_eq!(reqs[0].path, "/v1/x");
        assert_eq!(reqs[0].body["a"], 1);
        assert!(reqs[0].headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer secret"));
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let server = testing::serve(vec![(503, "busy".into()), (500, "oops".into()), (200, "{}".into())]);
        let r: Result<serde_json::Value, _> = quick(&server.base_url, 3).post("v1/x", &());
        assert!(r.is_ok());
        assert_eq!(server.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = testing::serve(vec![(400, "bad".into())]);
        let r: Result<serde_json::Value, _> = quick(&server.base_url, 3).post("v1/x", &());
        assert!(matches!(r, Err(HttpError::Status { status: 400, .. })));
        assert_eq!(server.requests.lock().unwrap().len(), 1);
    }

    #[test]
    fn gives_up_after_retry_budget() {
        let server = testing::serve(vec![(502, "down".into())]);
        let r: Result<serde_json::Value, _> = quick(&server.base_url, 2).post("v1/x", &());
        assert!(matches!(r, Err(HttpError::Status { status: 502, .. })));
        assert_eq!(server.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let r: Result<serde_json::Value, _> = quick("http://127.0.0.1:1", 0).post("v1/x", &());
        assert!(matches!(r, Err(HttpError::Transport { .. })));
    }
}
