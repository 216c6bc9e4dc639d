use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chrf::{chrf, ChrfParams};
use super::tok13a::py_split;
use super::MetricError;
use crate::corpus::Vocabulary;
use crate::http::{EndpointConfig, JsonClient};

/// |A ∩ B| / |A ∪ B|. Two empty vocabularies score 0.
pub fn jaccard_similarity(a: &Vocabulary, b: &Vocabulary) -> Result<f64, MetricError> {
    if a.policy != b.policy {
        return Err(MetricError::PolicyMismatch(a.policy.to_string(), b.policy.to_string()));
    }
    let inter = a.words.intersection(&b.words).count();
    let union = a.words.len() + b.words.len() - inter;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

pub trait TokenCounter: Send + Sync {
    fn counter_id(&self) -> String;
    fn count(&self, text: &str) -> Result<usize, MetricError>;
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn counter_id(&self) -> String {
        "whitespace".into()
    }

    fn count(&self, text: &str) -> Result<usize, MetricError> {
        Ok(py_split(text).count())
    }
}

/// Merge-table BPE over a fixed vocabulary.
///
/// Each whitespace word is prefixed with `word_prefix` (`▁` for
/// SentencePiece-style vocabularies) and split into characters; merges are
/// applied by rank. A final symbol missing from the vocabulary costs one
/// token per UTF-8 byte.
#[derive(Debug, Clone)]
pub struct BpeCounter {
    id: String,
    vocab: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    word_prefix: String,
}

impl BpeCounter {
    pub fn new(
        id: impl Into<String>,
        vocab: HashMap<String, u32>,
        merges: Vec<(String, String)>,
        word_prefix: impl Into<String>,
    ) -> Self {
        let ranks = merges.into_iter().enumerate().map(|(i, m)| (m, i)).collect();
        Self { id: id.into(), vocab, ranks, word_prefix: word_prefix.into() }
    }

    /// Loads a `vocab.json` (token -> id) and `merges.txt` (one `a b` pair
    /// per line, `#` lines ignored).
    pub fn from_files(vocab: &Path, merges: &Path, word_prefix: &str) -> Result<Self, MetricError> {
        let io = |p: &Path, e: std::io::Error| MetricError::Tokenizer(format!("{}: {e}", p.display()));
        let v: HashMap<String, u32> = serde_json::from_str(&fs::read_to_string(vocab).map_err(|e| io(vocab, e))?)
            .map_err(|e| MetricError::Tokenizer(format!("{}: {e}", vocab.display())))?;
        let mut pairs = Vec::new();
        for (i, line) in fs::read_to_string(merges).map_err(|e| io(merges, e))?.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => pairs.push((a.to_owned(), b.to_owned())),
                _ => return Err(MetricError::Tokenizer(format!("{}:{}: bad merge", merges.display(), i + 1))),
            }
        }
        let stem = vocab.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
        Ok(Self::new(format!("bpe:{}", stem.unwrap_or_default()), v, pairs, word_prefix))
    }

    fn word_tokens(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> =
            format!("{}{word}", self.word_prefix).chars().map(String::from).collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, i)) = best else { break };
            let merged = format!("{}{}", syms[i], syms[i + 1]);
            syms.splice(i..i + 2, [merged]);
        }
        syms
    }
}

impl TokenCounter for BpeCounter {
    fn counter_id(&self) -> String {
        self.id.clone()
    }

    fn count(&self, text: &str) -> Result<usize, MetricError> {
        Ok(py_split(text)
            .flat_map(|w| self.word_tokens(w))
            .map(|s| if self.vocab.contains_key(&s) { 1 } else { s.len() })
            .sum())
    }
}

/// `POST {base_url}/tokenize` with `{"text": ...}`, answering `{"count": n}`.
#[derive(Debug, Clone)]
pub struct RemoteTokenCounter {
    client: JsonClient,
    model: String,
}

#[derive(Serialize)]
struct TokenizeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TokenizeResponse {
    count: usize,
}

impl RemoteTokenCounter {
    pub fn new(endpoint: EndpointConfig, model: impl Into<String>) -> Self {
        Self { client: JsonClient::new(endpoint), model: model.into() }
    }
}

impl TokenCounter for RemoteTokenCounter {
    fn counter_id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn count(&self, text: &str) -> Result<usize, MetricError> {
        let r: TokenizeResponse = self
            .client
            .post("tokenize", &TokenizeRequest { text })
            .map_err(|e| MetricError::Tokenizer(e.to_string()))?;
        Ok(r.count)
    }
}

/// Tokens per whitespace word over the whole corpus.
pub fn token_fertility<S: AsRef<str>>(texts: &[S], counter: &dyn TokenCounter) -> Result<f64, MetricError> {
    let (mut tokens, mut words) = (0usize, 0usize);
    for t in texts {
        tokens += counter.count(t.as_ref())?;
        words += py_split(t.as_ref()).count();
    }
    if words == 0 {
        return Err(MetricError::NoWords);
    }
    Ok(tokens as f64 / words as f64)
}

/// Plain chrF of hypotheses against the pivot translations used as
/// references.
pub fn pivot_deviation<P: AsRef<str>, H: AsRef<str>>(pivots: &[P], hyps: &[H]) -> Result<f64, MetricError> {
    chrf(hyps, pivots, ChrfParams::CHRF).map(|(s, _)| s)
}
