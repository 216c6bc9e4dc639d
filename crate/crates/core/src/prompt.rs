//! Few-shot prompt assembly in the automatic post-editing (APE) framing.
//!
//! Every user turn carries the instruction paragraph followed by the field
//! lines. Pivot condition:
//!
//! ```text
//! APE is a task designed to enhance the quality of the translation by ...
//!
//! Original (English): <source>
//! Translation (Marathi): <pivot>
//! Post-edited (Konkani):
//! ```
//!
//! Direct condition drops the pivot line and cues with
//! `Translation (Konkani):`. Demonstrations are user/assistant pairs whose
//! assistant turn is the target text; the final user turn is the query.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Languages, Triplet};
use crate::retrieval::{rank_order, Datastore, RetrievalResult};

pub const IM_START: &str = "<|im_start|>";
pub const IM_END: &str = "<|im_end|>";

pub const APE_INSTRUCTION: &str = "APE is a task designed to enhance the quality of the translation by \
performing only minor adjustments to fix any existing translation mistakes. If the translation is \
already correct, you should retain it as is.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("message content contains a ChatML marker")]
    MarkerInContent,
    #[error("pivot condition requires a pivot translation for triplet {0}")]
    MissingPivot(u64),
    #[error("pivot condition requires a pivot language label")]
    MissingPivotLabel,
    #[error("retrieved triplet {0} is not in the datastore")]
    UnknownTriplet(u64),
    #[error("malformed ChatML at byte {at}: {message}")]
    Parse { at: usize, message: String },
    #[error("invalid prompt bundle: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system" => Ok(Role::System),
            "user" => Ok(Role::User),
            "assistant" => Ok(Role::Assistant),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// A chat turn. Content never contains ChatML markers; those are added at
/// render time only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ChatMessage {
    role: Role,
    content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, PromptError> {
        let content = content.into();
        if content.contains(IM_START) || content.contains(IM_END) {
            return Err(PromptError::MarkerInContent);
        }
        Ok(Self { role, content })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn content(&self) -> &str {
        &self.content
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Direct,
    Pivot,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Direct => "direct",
            Condition::Pivot => "pivot",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Condition::Direct),
            "pivot" => Ok(Condition::Pivot),
            other => Err(format!("unknown condition `{other}` (expected direct or pivot)")),
        }
    }
}

/// Where the most similar demonstration goes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

/// Display names used inside the template, e.g. "English", "Marathi".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangLabels {
    pub source: String,
    pub pivot: Option<String>,
    pub target: String,
}

impl LangLabels {
    /// Resolves display names through `overrides` first, then the built-in
    /// table; unknown codes are used verbatim.
    pub fn from_codes(languages: &Languages, overrides: &BTreeMap<String, String>) -> Self {
        let label = |code: &str| {
            overrides
                .get(code)
                .cloned()
                .or_else(|| default_label(code).map(str::to_owned))
                .unwrap_or_else(|| code.to_owned())
        };
        Self {
            source: label(&languages.source),
            pivot: languages.pivot.as_deref().map(label),
            target: label(&languages.target),
        }
    }
}

pub fn default_label(code: &str) -> Option<&'static str> {
    Some(match code {
        "eng" => "English",
        "mar" => "Marathi",
        "gom" => "Konkani",
        "hin" => "Hindi",
        "msa" | "arb" => "Modern Standard Arabic",
        "aeb" => "Tunisian",
        _ => return None,
    })
}

fn user_content(
    source: &str,
    pivot: Option<&str>,
    labels: &LangLabels,
    condition: Condition,
) -> String {
    let mut s = format!("{APE_INSTRUCTION}\n\nOriginal ({}): {source}\n", labels.source);
    match (condition, pivot) {
        (Condition::Pivot, Some(p)) => {
            let piv_label = labels.pivot.as_deref().unwrap_or_default();
            s.push_str(&format!("Translation ({piv_label}): {p}\nPost-edited ({}):", labels.target));
        }
        _ => s.push_str(&format!("Translation ({}):", labels.target)),
    }
    s
}

fn pivot_of<'a>(t: &'a Triplet, condition: Condition, labels: &LangLabels) -> Result<Option<&'a str>, PromptError> {
    match condition {
        Condition::Direct => Ok(None),
        Condition::Pivot => {
            if labels.pivot.is_none() {
                return Err(PromptError::MissingPivotLabel);
            }
            t.pivot.as_deref().map(Some).ok_or(PromptError::MissingPivot(t.id))
        }
    }
}

/// One demonstration: the filled user turn and the target-text reply.
pub fn build_demonstration(
    t: &Triplet,
    condition: Condition,
    labels: &LangLabels,
) -> Result<(ChatMessage, ChatMessage), PromptError> {
    let pivot = pivot_of(t, condition, labels)?;
    Ok((
        ChatMessage::new(Role::User, user_content(&t.source, pivot, labels, condition))?,
        ChatMessage::new(Role::Assistant, t.target.clone())?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    pub condition: Condition,
    pub k: usize,
    pub query_id: u64,
    pub query_source: String,
    pub lang_labels: LangLabels,
}

impl PromptBundle {
    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |m: String| Err(PromptError::Invalid(m));
        if self.messages.len() != 2 * self.k + 1 {
            return invalid(format!("{} messages for k={}", self.messages.len(), self.k));
        }
        for (i, m) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return invalid(format!("message {i} has role {}", m.role.as_str()));
            }
            if m.role == Role::User {
                let has_pivot_line = m.content.lines().any(|l| {
                    self.lang_labels.pivot.as_ref().is_some_and(|p| l.starts_with(&format!("Translation ({p}):")))
                });
                if has_pivot_line != (self.condition == Condition::Pivot) {
                    return invalid(format!("message {i} pivot line does not match condition {}", self.condition));
                }
            }
        }
        Ok(())
    }

    pub fn final_user_message(&self) -> &ChatMessage {
        self.messages.last().expect("bundle has at least the query message")
    }
}

/// Assembles a prompt for `query` from retrieved demonstrations.
///
/// Hits are re-ranked by similarity (descending) with ascending-id ties, so
/// the result does not depend on the order of `hits`.
pub fn build_prompt(
    query: &Triplet,
    hits: &RetrievalResult,
    store: &Datastore,
    condition: Condition,
    labels: &LangLabels,
    order: DemoOrder,
) -> Result<PromptBundle, PromptError> {
    let query_pivot = pivot_of(query, condition, labels)?;
    let mut ranked = hits.hits.clone();
    ranked.sort_by(rank_order);
    if order == DemoOrder::MostSimilarLast {
        ranked.reverse();
    }
    let mut messages = Vec::with_capacity(2 * ranked.len() + 1);
    for hit in &ranked {
        let t = store.triplet(hit.triplet_id).ok_or(PromptError::UnknownTriplet(hit.triplet_id))?;
        let (user, assistant) = build_demonstration(t, condition, labels)?;
        messages.push(user);
        messages.push(assistant);
    }
    messages.push(ChatMessage::new(Role::User, user_content(&query.source, query_pivot, labels, condition))?);
    Ok(PromptBundle {
        messages,
        condition,
        k: ranked.len(),
        query_id: query.id,
        query_source: query.source.clone(),
        lang_labels: labels.clone(),
    })
}

/// Renders messages as ChatML, optionally cueing an assistant reply.
pub fn render_messages(messages: &[ChatMessage], generation_cue: bool) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(IM_START);
        out.push_str(m.role.as_str());
        out.push('\n');
        out.push_str(&m.content);
        out.push_str(IM_END);
        out.push('\n');
    }
    if generation_cue {
        out.push_str(IM_START);
        out.push_str("assistant\n");
    }
    out
}

/// ChatML text of the bundle, ending with the `<|im_start|>assistant` cue.
pub fn render_chatml(bundle: &PromptBundle) -> String {
    render_messages(&bundle.messages, true)
}

/// Inverse of [`render_messages`]: recovers the message list and whether a
/// trailing generation cue was present.
pub fn parse_chatml(text: &str) -> Result<(Vec<ChatMessage>, bool), PromptError> {
    let err = |at: usize, m: &str| PromptError::Parse { at, message: m.to_owned() };
    let mut messages = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let after_start = rest.strip_prefix(IM_START).ok_or_else(|| err(pos, "expected <|im_start|>"))?;
        let nl = after_start.find('\n').ok_or_else(|| err(pos, "role line is not terminated"))?;
        let role: Role = after_start[..nl].parse().map_err(|e: String| err(pos, &e))?;
        let body_start = pos + IM_START.len() + nl + 1;
        if body_start == text.len() && role == Role::Assistant {
            return Ok((messages, true));
        }
        let body = &text[body_start..];
        let end = body.find(IM_END).ok_or_else(|| err(body_start, "missing <|im_end|>"))?;
        messages.push(ChatMessage::new(role, &body[..end])?);
        pos = body_start + end + IM_END.len();
        if !text[pos..].starts_with('\n') {
            return Err(err(pos, "expected newline after <|im_end|>"));
        }
        pos += 1;
    }
    Ok((messages, false))
}
