use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pivotmt::corpus::{load_corpus, write_triplets, NormalizationPolicy};
use pivotmt::llm::{write_replay_fixtures, BackendKind};
use pivotmt::runner::{
    analyze, build_token_counter, compare_conditions, compare_systems, emit_comparison, emit_report,
    AnalysisOptions, ComparisonRow, Experiment, ExperimentConfig, ExperimentResult, RESULT_FILE,
};
use pivotmt::stats::Metric;
use pivotmt::Condition;

#[derive(Parser)]
#[command(name = "pivotmt", version, about = "Pivot-augmented few-shot translation experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `backend.kind`.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Replay fixture file; implies `--backend replay` unless given.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, split and validate the corpus; writes train/test JSONL.
    Ingest,
    /// Build (or verify) the retrieval datastore.
    Index {
        /// Discard an existing datastore first.
        #[arg(long)]
        rebuild: bool,
    },
    /// Run a single (condition, k) cell.
    Run {
        #[arg(long, default_value = "direct")]
        condition: Condition,
        #[arg(long)]
        k: usize,
    },
    /// Run every configured (condition, k) cell.
    Ablate {
        /// Also write the generations as replay fixtures.
        #[arg(long)]
        export_replay: Option<PathBuf>,
    },
    /// Paired bootstrap significance.
    Compare(CompareArgs),
    /// Lexical analyses over the corpus and generations.
    Analyze(AnalyzeArgs),
    /// Re-emit CSV and Markdown from a persisted result.
    Report {
        /// Defaults to `<out>/result.json`.
        #[arg(long)]
        result: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CompareArgs {
    /// Result holding system A (defaults to `<out>/result.json`).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Cell of A as `condition:k`. Without cells, pivot is compared to
    /// direct at every k present in A.
    #[arg(long, requires = "b_cell")]
    a_cell: Option<String>,
    /// Result holding system B (defaults to A).
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long, requires = "a_cell")]
    b_cell: Option<String>,
    #[arg(long, default_value = "chrfpp")]
    metric: Metric,
    #[arg(long, default_value_t = 1000)]
    n: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    jaccard: bool,
    /// Token fertility for the named tokenizers from the config
    /// (all configured ones when no name is given).
    #[arg(long, num_args = 0.., value_name = "NAME")]
    fertility: Option<Vec<String>>,
    /// Pivot deviation using the generations in this result
    /// (defaults to `<out>/result.json`).
    #[arg(long, num_args = 0..=1, value_name = "RESULT")]
    deviation: Option<Option<PathBuf>>,
    /// Restrict Jaccard to one normalization policy.
    #[arg(long)]
    policy: Option<NormalizationPolicy>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().context("--config is required for this command")?;
    let mut cfg = ExperimentConfig::from_toml_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(replay) = &cli.replay {
        cfg.backend.replay_path = Some(replay.clone());
        cfg.backend.kind = BackendKind::Replay;
    }
    if let Some(kind) = cli.backend {
        cfg.backend.kind = kind;
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    if let Some(out) = &cli.out {
        return Ok(out.clone());
    }
    Ok(load_config(cli)?.out_dir)
}

fn parse_cell(s: &str) -> Result<(Condition, usize)> {
    let (c, k) = s.split_once(':').with_context(|| format!("cell `{s}` is not `condition:k`"))?;
    Ok((c.parse().map_err(anyhow::Error::msg)?, k.parse().with_context(|| format!("bad k in `{s}`"))?))
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn print_rows(result: &ExperimentResult) {
    for r in &result.rows {
        match &r.report {
            Some(m) => println!("{:<6} k={}  BLEU {:6.2}  chrF++ {:6.2}  [{}]", r.condition, r.k, m.bleu, m.chrfpp, r.status()),
            None => println!("{:<6} k={}  failed: {}", r.condition, r.k, r.error.as_deref().unwrap_or("")),
        }
    }
}

fn ingest(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut desc = cfg.corpus.clone();
    desc.seed.get_or_insert(cfg.seed);
    let corpus = load_corpus(&desc, Path::new("."))?;
    let dir = cfg.out_dir.join("corpus");
    for (name, split) in [("train", corpus.train()), ("test", corpus.test())] {
        let path = dir.join(format!("{name}.jsonl"));
        write_triplets(&path, split).with_context(|| path.display().to_string())?;
        println!("{name}: {} triplets -> {}", split.len(), path.display());
    }
    println!("no train/test leakage in `{}`", corpus.name());
    Ok(())
}

fn index(cli: &Cli, rebuild: bool) -> Result<()> {
    let cfg = load_config(cli)?;
    let path = cfg.datastore_path();
    if rebuild && path.exists() {
        std::fs::remove_file(&path).with_context(|| path.display().to_string())?;
    }
    let exp = Experiment::prepare(cfg)?;
    let store = exp.datastore();
    println!("{}: {} entries, dim {}, provider {}", path.display(), store.len(), store.dimension(), store.provider_id());
    Ok(())
}

fn run(cli: &Cli, condition: Condition, k: usize) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cfg.out_dir.clone();
    let exp = Experiment::prepare(cfg)?;
    let row = exp.run_cell(condition, k)?;
    let failed = row.error.is_some();
    let path = out.join(RESULT_FILE);
    let mut result = match ExperimentResult::read_json(&path) {
        Ok(prev) if prev.config_digest == exp.config().digest() => prev,
        _ => exp.result_with(Vec::new()),
    };
    result.upsert(row);
    print_rows(&ExperimentResult { rows: vec![result.row(condition, k).unwrap().clone()], ..result.clone() });
    print_files(&emit_report(&result, &out)?);
    if failed {
        bail!("cell {condition} k={k} did not complete; re-run to resume");
    }
    Ok(())
}

fn ablate(cli: &Cli, export: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cfg.out_dir.clone();
    let exp = Experiment::prepare(cfg)?;
    let result = exp.run_ablation();
    print_rows(&result);
    print_files(&emit_report(&result, &out)?);
    if let Some(path) = export {
        let records = exp.generation_records();
        write_replay_fixtures(path, &records).with_context(|| path.display().to_string())?;
        println!("wrote {} replay fixtures to {}", records.len(), path.display());
    }
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} cell(s) failed; re-run to resume");
    }
    Ok(())
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let seed = match (cli.seed, &cli.config) {
        (Some(s), _) => s,
        (None, Some(_)) => load_config(cli)?.seed,
        (None, None) => 0,
    };
    let a_path = args.a.clone().unwrap_or_else(|| out.join(RESULT_FILE));
    let a = ExperimentResult::read_json(&a_path)?;
    let b = match &args.b {
        Some(p) => ExperimentResult::read_json(p)?,
        None => a.clone(),
    };
    let rows = match (&args.a_cell, &args.b_cell) {
        (Some(ca), Some(cb)) => {
            let (ca, cb) = (parse_cell(ca)?, parse_cell(cb)?);
            let r = compare_systems(&a, ca, &b, cb, args.metric, args.n, seed)?;
            println!(
                "{} {}:{} vs {}:{}  delta {:+.2}  p {:.4}  ({:?}, n={}, seed={})",
                args.metric, ca.0, ca.1, cb.0, cb.1, r.delta_observed, r.p_value, r.direction, r.n_resamples, r.seed
            );
            let other = if args.metric == Metric::Bleu { Metric::Chrfpp } else { Metric::Bleu };
            let r2 = compare_systems(&a, ca, &b, cb, other, args.n, seed)?;
            let (bleu, chrfpp) = if args.metric == Metric::Bleu { (r, r2) } else { (r2, r) };
            vec![ComparisonRow { lang: pivotmt::runner::display_code(&a.target_lang), model: a.model_name.clone(), k: ca.1, bleu, chrfpp }]
        }
        _ => {
            let rows = compare_conditions(&a, args.n, seed)?;
            if rows.is_empty() {
                bail!("{} has no k with both pivot and direct cells complete", a_path.display());
            }
            for r in &rows {
                println!(
                    "k={}  dBLEU {:+.2} (p {:.3})  dchrF++ {:+.2} (p {:.3})",
                    r.k, r.bleu.delta_observed, r.bleu.p_value, r.chrfpp.delta_observed, r.chrfpp.p_value
                );
            }
            rows
        }
    };
    print_files(&emit_comparison(&rows, &out)?);
    Ok(())
}

fn analyze_cmd(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut desc = cfg.corpus.clone();
    desc.seed.get_or_insert(cfg.seed);
    let corpus = load_corpus(&desc, Path::new("."))?;
    let nothing = !args.jaccard && args.fertility.is_none() && args.deviation.is_none();

    let mut tokenizers = Vec::new();
    if let Some(names) = &args.fertility {
        if cfg.tokenizers.is_empty() {
            bail!("fertility needs at least one entry under [tokenizers] in the config");
        }
        let names: Vec<&String> = if names.is_empty() { cfg.tokenizers.keys().collect() } else { names.iter().collect() };
        for name in names {
            let spec = cfg.tokenizers.get(name).with_context(|| format!("no tokenizer `{name}` in config"))?;
            tokenizers.push((name.clone(), build_token_counter(spec)?));
        }
    }
    let generations = match &args.deviation {
        Some(p) => {
            let path = p.clone().unwrap_or_else(|| cfg.out_dir.join(RESULT_FILE));
            Some(ExperimentResult::read_json(&path)?)
        }
        None => None,
    };
    let options = AnalysisOptions {
        jaccard: args.jaccard || nothing,
        policies: args.policy.into_iter().collect(),
        tokenizers,
        generations: generations.as_ref(),
    };
    let report = analyze(&corpus, &options)?;
    print!("{}", report.markdown());
    print_files(&report.emit(&cfg.out_dir)?);
    Ok(())
}

fn report(cli: &Cli, result: Option<&Path>) -> Result<()> {
    let out = out_dir(cli)?;
    let path = result.map(Path::to_path_buf).unwrap_or_else(|| out.join(RESULT_FILE));
    let result = ExperimentResult::read_json(&path)?;
    print_rows(&result);
    print_files(&emit_report(&result, &out)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Ingest => ingest(&cli),
        Command::Index { rebuild } => index(&cli, *rebuild),
        Command::Run { condition, k } => run(&cli, *condition, *k),
        Command::Ablate { export_replay } => ablate(&cli, export_replay.as_deref()),
        Command::Compare(args) => compare(&cli, args),
        Command::Analyze(args) => analyze_cmd(&cli, args),
        Command::Report { result } => report(&cli, result.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
