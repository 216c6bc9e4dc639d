//! Experiment orchestration over the (condition × k) grid.
//!
//! [`Experiment::prepare`] loads the corpus, loads or builds the datastore,
//! embeds the test queries once and wires up the generation backend with its
//! cache in `out_dir`. Cells then reuse all of that. Every persisted file is
//! written atomically, and a re-run only calls the backend for prompts whose
//! hash is not yet cached.

mod analysis;
mod config;
mod report;

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use thiserror::Error;

pub use analysis::{
    analyze, build_token_counter, AnalysisOptions, AnalysisReport, DeviationRow, FertilityRow, JaccardRow,
};
pub use config::{
    default_baselines, Baseline, BackendSpec, EmbeddingSpec, ExperimentConfig, MockMode, TokenizerSpec,
    ENV_API_KEY, ENV_BASE_URL, ENV_EMBEDDINGS_URL,
};
pub use report::{
    ablation_csv, comparison_markdown, display_code, emit_comparison, emit_report, summary_markdown, CellRow,
    ComparisonRow, ExperimentResult, SegmentRecord, CSV_FILE, RESULT_FILE, SUMMARY_FILE,
};

use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::llm::{
    prompt_hash, Backend, BackendKind, GenerationCache, GenerationRecord, Generator, LiveBackend, LlmError,
    MockBackend, ReplayBackend,
};
use crate::metrics::{score_corpus, MetricError, Signatures};
use crate::prompt::{build_prompt, render_chatml, Condition, LangLabels, PromptBundle, PromptError};
use crate::retrieval::{
    build_index, embed_texts, Datastore, EmbedOptions, EmbeddingProvider, EmbeddingVector, HashedBagOfWords,
    HttpEmbeddingProvider, RetrievalError,
};
use crate::stats::{paired_bootstrap, BootstrapReport, Metric, StatsError};
use crate::util;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("datastore {0} was built from a different train split; delete it or point `datastore` elsewhere")]
    StaleIndex(String),
    #[error("no completed {condition} cell with k={k}")]
    MissingCell { condition: Condition, k: usize },
    #[error("test sets differ: {0}")]
    TestSetMismatch(String),
    #[error("json: {0}")]
    Json(String),
}

fn embedding_provider(spec: &EmbeddingSpec) -> Result<(Box<dyn EmbeddingProvider>, EmbedOptions), RunnerError> {
    match spec {
        EmbeddingSpec::Hashed { dimension } => {
            Ok((Box::new(HashedBagOfWords::new(*dimension)), EmbedOptions::default()))
        }
        EmbeddingSpec::Http { model, endpoint, batch_size } => {
            let ep = endpoint.clone().ok_or_else(|| {
                RunnerError::Config(format!("http embeddings need embedding.endpoint or {ENV_EMBEDDINGS_URL}"))
            })?;
            Ok((
                Box::new(HttpEmbeddingProvider::new(ep, model.clone())),
                EmbedOptions { batch_size: *batch_size, ..EmbedOptions::default() },
            ))
        }
    }
}

/// Backend described by `spec`; the oracle mock answers with test targets.
pub fn build_backend(spec: &BackendSpec, corpus: &Corpus) -> Result<Arc<dyn Backend>, RunnerError> {
    Ok(match spec.kind {
        BackendKind::Mock => match spec.mock {
            MockMode::Digest => Arc::new(MockBackend::default()),
            MockMode::Empty => Arc::new(MockBackend::constant("")),
            MockMode::Oracle => Arc::new(MockBackend::with_fixtures(
                corpus.test().iter().map(|t| (t.source.clone(), t.target.clone())).collect(),
            )),
        },
        BackendKind::Replay => {
            let path = spec.replay_path.as_ref().ok_or_else(|| RunnerError::Config("replay_path missing".into()))?;
            Arc::new(ReplayBackend::load(path).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?)
        }
        BackendKind::Live => {
            let ep = spec.endpoint.clone().ok_or_else(|| RunnerError::Config("live endpoint missing".into()))?;
            Arc::new(LiveBackend::new(ep))
        }
    })
}

/// Loads the index at `path` when it matches `corpus`, otherwise builds and
/// saves a fresh one.
pub fn load_or_build_index(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
    path: &Path,
) -> Result<Datastore, RunnerError> {
    if path.exists() {
        let store = Datastore::load(path, Some(provider.provider_id()))?;
        if store.corpus_name() != corpus.name() || store.triplets() != corpus.train() {
            return Err(RunnerError::StaleIndex(path.display().to_string()));
        }
        log::info!("loaded datastore {} ({} entries)", path.display(), store.len());
        return Ok(store);
    }
    let store = build_index(corpus, provider, opts)?;
    store.save(path)?;
    log::info!("built datastore {} ({} entries)", path.display(), store.len());
    Ok(store)
}

enum Outcome {
    Done(GenerationRecord),
    Overflow(String),
    Failed(String),
    Skipped,
}

/// A prepared experiment: corpus, index, query embeddings and generator.
pub struct Experiment {
    config: ExperimentConfig,
    corpus: Corpus,
    store: Datastore,
    queries: Vec<EmbeddingVector>,
    labels: LangLabels,
    generator: Generator,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, RunnerError> {
        Self::prepare_inner(config, None)
    }

    /// Like [`Experiment::prepare`] but with a caller-supplied backend.
    pub fn with_backend(config: ExperimentConfig, backend: Arc<dyn Backend>) -> Result<Self, RunnerError> {
        Self::prepare_inner(config, Some(backend))
    }

    fn prepare_inner(config: ExperimentConfig, backend: Option<Arc<dyn Backend>>) -> Result<Self, RunnerError> {
        config.validate()?;
        let mut descriptor = config.corpus.clone();
        descriptor.seed.get_or_insert(config.seed);
        let corpus = load_corpus(&descriptor, Path::new("."))?;
        let (provider, opts) = embedding_provider(&config.embedding)?;
        let store = load_or_build_index(&corpus, provider.as_ref(), opts, &config.datastore_path())?;
        let sources: Vec<String> = corpus.test().iter().map(|t| t.source.clone()).collect();
        let queries = embed_texts(provider.as_ref(), &sources, opts)?;
        let labels = LangLabels::from_codes(corpus.languages(), &config.labels);
        let backend = match backend {
            Some(b) => b,
            None => build_backend(&config.backend, &corpus)?,
        };
        let cache = Arc::new(GenerationCache::open(&config.out_dir)?);
        let generator = Generator::new(backend, config.sampling.clone(), config.model_id.clone())
            .with_cache(cache)
            .with_policy(config.cleaning)
            .with_max_in_flight(config.max_in_flight);
        Ok(Self { config, corpus, store, queries, labels, generator })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn datastore(&self) -> &Datastore {
        &self.store
    }

    /// Prompt bundles for every test triplet.
    pub fn bundles(&self, condition: Condition, k: usize) -> Result<Vec<PromptBundle>, RunnerError> {
        self.corpus
            .test()
            .iter()
            .zip(&self.queries)
            .map(|(t, q)| {
                let hits = self.store.retrieve_topk(q, k)?;
                Ok(build_prompt(t, &hits, &self.store, condition, &self.labels, self.config.demo_order)?)
            })
            .collect()
    }

    /// Retrieve, prompt, generate and score one cell, then persist the row
    /// under `out_dir/cells/`. A backend failure stops further calls for the
    /// cell; completed generations stay cached and the row carries the error.
    pub fn run_cell(&self, condition: Condition, k: usize) -> Result<CellRow, RunnerError> {
        let row = self.compute_cell(condition, k)?;
        let path = self.config.out_dir.join("cells").join(format!("{condition}-k{k}.json"));
        let mut text = serde_json::to_string_pretty(&row).map_err(|e| RunnerError::Json(e.to_string()))?;
        text.push('\n');
        util::write_atomic(&path, text.as_bytes())?;
        Ok(row)
    }

    fn compute_cell(&self, condition: Condition, k: usize) -> Result<CellRow, RunnerError> {
        let bundles = self.bundles(condition, k)?;
        let abort = AtomicBool::new(false);
        let outcomes = util::bounded_map(&bundles, self.config.max_in_flight, |b| {
            if abort.load(Ordering::SeqCst) {
                return Outcome::Skipped;
            }
            match self.generator.generate(b) {
                Ok(r) => Outcome::Done(r),
                Err(LlmError::ContextOverflow(m)) => Outcome::Overflow(m),
                Err(e) => {
                    abort.store(true, Ordering::SeqCst);
                    Outcome::Failed(e.to_string())
                }
            }
        });

        let n_generations = outcomes.iter().filter(|o| matches!(o, Outcome::Done(_))).count();
        let n_errors = outcomes.iter().filter(|o| matches!(o, Outcome::Failed(_))).count();
        let n_overflow = outcomes.iter().filter(|o| matches!(o, Outcome::Overflow(_))).count();
        if n_errors > 0 {
            let first = outcomes.iter().find_map(|o| match o {
                Outcome::Failed(m) => Some(m.as_str()),
                _ => None,
            });
            let skipped = outcomes.iter().filter(|o| matches!(o, Outcome::Skipped)).count();
            let msg = format!(
                "{n_errors} generation(s) failed, {skipped} not attempted, {n_generations} cached: {}",
                first.unwrap_or_default()
            );
            log::warn!("{condition} k={k}: {msg}");
            let mut row = CellRow::failed(condition, k, msg);
            row.n_generations = n_generations;
            row.n_errors = n_errors;
            row.n_context_overflow = n_overflow;
            row.context_overflow = n_overflow > 0;
            return Ok(row);
        }

        let test = self.corpus.test();
        let mut hyps = Vec::with_capacity(test.len());
        let mut hashes = Vec::with_capacity(test.len());
        let mut overflowed = Vec::with_capacity(test.len());
        for (o, b) in outcomes.into_iter().zip(&bundles) {
            match o {
                Outcome::Done(r) => {
                    hyps.push(r.hypothesis);
                    hashes.push(r.prompt_hash);
                    overflowed.push(false);
                }
                Outcome::Overflow(m) => {
                    log::warn!("{condition} k={k} query {}: context overflow: {m}", b.query_id);
                    hyps.push(String::new());
                    hashes.push(prompt_hash(&render_chatml(b), &self.config.sampling, &self.config.model_id));
                    overflowed.push(true);
                }
                Outcome::Failed(_) | Outcome::Skipped => unreachable!("failures return early"),
            }
        }
        let refs: Vec<&str> = test.iter().map(|t| t.target.as_str()).collect();
        let (report, scores) = score_corpus(&hyps, &refs)?;
        let segments = test
            .iter()
            .zip(hyps)
            .zip(hashes)
            .zip(overflowed)
            .zip(scores)
            .map(|((((t, hypothesis), prompt_hash), context_overflow), scores)| SegmentRecord {
                query_id: t.id,
                prompt_hash,
                hypothesis,
                reference: t.target.clone(),
                context_overflow,
                scores,
            })
            .collect();
        Ok(CellRow {
            condition,
            k,
            report: Some(report),
            n_generations,
            n_errors: 0,
            n_context_overflow: n_overflow,
            context_overflow: n_overflow > 0,
            error: None,
            segments,
        })
    }

    fn empty_result(&self) -> ExperimentResult {
        let langs = self.corpus.languages();
        ExperimentResult {
            config_digest: self.config.digest(),
            corpus: self.corpus.name().to_owned(),
            source_lang: langs.source.clone(),
            pivot_lang: langs.pivot.clone(),
            target_lang: langs.target.clone(),
            model_id: self.config.model_id.clone(),
            model_name: self.config.model_name().to_owned(),
            signatures: Signatures::default(),
            baselines: self.config.baselines.clone(),
            rows: Vec::new(),
        }
    }

    /// Result holding the given cells.
    pub fn result_with(&self, rows: Vec<CellRow>) -> ExperimentResult {
        ExperimentResult { rows, ..self.empty_result() }
    }

    /// Every configured (condition, k) cell, in config order. A failing cell
    /// is recorded on its row and the sweep continues.
    pub fn run_ablation(&self) -> ExperimentResult {
        let mut rows = Vec::new();
        for &condition in &self.config.conditions {
            for &k in &self.config.k_values {
                log::info!("cell {condition} k={k}");
                rows.push(self.run_cell(condition, k).unwrap_or_else(|e| CellRow::failed(condition, k, e.to_string())));
            }
        }
        self.result_with(rows)
    }

    /// Records produced so far, for replay fixture export.
    pub fn generation_records(&self) -> Vec<GenerationRecord> {
        self.generator.cache().map(|c| c.records()).unwrap_or_default()
    }
}

/// Prepares and runs one cell.
pub fn run_cell(config: ExperimentConfig, condition: Condition, k: usize) -> Result<CellRow, RunnerError> {
    Experiment::prepare(config)?.run_cell(condition, k)
}

/// Prepares and runs the full sweep.
pub fn run_ablation(config: ExperimentConfig) -> Result<ExperimentResult, RunnerError> {
    Ok(Experiment::prepare(config)?.run_ablation())
}

fn completed_row(result: &ExperimentResult, condition: Condition, k: usize) -> Result<&CellRow, RunnerError> {
    result.row(condition, k).filter(|r| r.is_complete()).ok_or(RunnerError::MissingCell { condition, k })
}

/// Paired bootstrap of cell A against cell B (A − B).
#[allow(clippy::too_many_arguments)]
pub fn compare_systems(
    result_a: &ExperimentResult,
    cell_a: (Condition, usize),
    result_b: &ExperimentResult,
    cell_b: (Condition, usize),
    metric: Metric,
    n: usize,
    seed: u64,
) -> Result<BootstrapReport, RunnerError> {
    let a = completed_row(result_a, cell_a.0, cell_a.1)?;
    let b = completed_row(result_b, cell_b.0, cell_b.1)?;
    if a.segments.len() != b.segments.len() {
        return Err(RunnerError::TestSetMismatch(format!("{} vs {} segments", a.segments.len(), b.segments.len())));
    }
    if let Some((sa, sb)) =
        a.segments.iter().zip(&b.segments).find(|(x, y)| x.query_id != y.query_id || x.reference != y.reference)
    {
        return Err(RunnerError::TestSetMismatch(format!("query {} vs {}", sa.query_id, sb.query_id)));
    }
    let sa: Vec<_> = a.segments.iter().map(|s| s.scores.clone()).collect();
    let sb: Vec<_> = b.segments.iter().map(|s| s.scores.clone()).collect();
    Ok(paired_bootstrap(&sa, &sb, metric, n, seed)?)
}

/// Pivot − direct for every k that has both cells complete.
pub fn compare_conditions(result: &ExperimentResult, n: usize, seed: u64) -> Result<Vec<ComparisonRow>, RunnerError> {
    let mut rows = Vec::new();
    let mut ks: Vec<usize> = result.rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let both = [Condition::Pivot, Condition::Direct].iter().all(|&c| completed_row(result, c, k).is_ok());
        if !both {
            continue;
        }
        let cmp = |metric| compare_systems(result, (Condition::Pivot, k), result, (Condition::Direct, k), metric, n, seed);
        rows.push(ComparisonRow {
            lang: display_code(&result.target_lang),
            model: result.model_name.clone(),
            k,
            bleu: cmp(Metric::Bleu)?,
            chrfpp: cmp(Metric::Chrfpp)?,
        });
    }
    Ok(rows)
}
