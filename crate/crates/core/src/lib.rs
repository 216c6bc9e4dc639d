//! Pivot-augmented few-shot machine translation experiments.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] loads and splits Source–Pivot–Target triplet corpora.
//! * [`retrieval`] embeds English sources and serves exact top-k cosine search.
//! * [`prompt`] turns retrieved triplets into direct or pivot-scaffolded ChatML prompts.
//! * [`llm`] generates hypotheses through mock, replay or live chat-completions backends.
//! * [`metrics`] scores output with BLEU (13a, exp smoothing) and chrF/chrF++,
//!   plus the lexical analyses (Jaccard, token fertility, pivot deviation).
//! * [`stats`] runs paired bootstrap significance tests over segment statistics.
//! * [`runner`] wires everything into resumable ablation sweeps and reports.

pub mod corpus;
pub mod http;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod retrieval;
pub mod runner;
pub mod stats;
mod util;

pub use corpus::{Corpus, Triplet};
pub use prompt::{Condition, PromptBundle};
pub use retrieval::{Datastore, RetrievalResult};
