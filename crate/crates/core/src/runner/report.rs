use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Baseline;
use super::RunnerError;
use crate::metrics::{MetricReport, SegmentScores, Signatures};
use crate::prompt::Condition;
use crate::stats::BootstrapReport;
use crate::util::{title_case, write_atomic};

pub const RESULT_FILE: &str = "result.json";
pub const CSV_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.md";

/// Short table label for a language code: `gom` -> `Gom`, `msa` -> `MSA`.
pub fn display_code(code: &str) -> String {
    match code {
        "msa" => "MSA".into(),
        other => title_case(other),
    }
}

/// One scored test segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub query_id: u64,
    /// Key of the persisted generation record.
    pub prompt_hash: String,
    pub hypothesis: String,
    pub reference: String,
    /// The endpoint rejected the prompt as too long; scored as empty.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub context_overflow: bool,
    pub scores: SegmentScores,
}

/// One (condition, k) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub condition: Condition,
    pub k: usize,
    /// Absent when the cell could not be completed.
    pub report: Option<MetricReport>,
    pub n_generations: usize,
    pub n_errors: usize,
    pub n_context_overflow: usize,
    pub context_overflow: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub segments: Vec<SegmentRecord>,
}

impl CellRow {
    pub fn failed(condition: Condition, k: usize, error: String) -> Self {
        Self {
            condition,
            k,
            report: None,
            n_generations: 0,
            n_errors: 0,
            n_context_overflow: 0,
            context_overflow: false,
            error: Some(error),
            segments: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.report.is_some()
    }

    pub fn status(&self) -> &'static str {
        match (&self.report, self.context_overflow) {
            (None, _) => "failed",
            (Some(_), true) => "context_overflow",
            (Some(_), false) => "ok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_digest: String,
    pub corpus: String,
    pub source_lang: String,
    pub pivot_lang: Option<String>,
    pub target_lang: String,
    pub model_id: String,
    pub model_name: String,
    pub signatures: Signatures,
    #[serde(default)]
    pub baselines: BTreeMap<String, Baseline>,
    pub rows: Vec<CellRow>,
}

impl ExperimentResult {
    pub fn row(&self, condition: Condition, k: usize) -> Option<&CellRow> {
        self.rows.iter().find(|r| r.condition == condition && r.k == k)
    }

    pub fn pair_key(&self) -> String {
        format!("{}-{}", self.source_lang, self.target_lang)
    }

    /// Complete row with the highest chrF++ for `condition` (ties: smaller k).
    pub fn best_k(&self, condition: Condition) -> Option<&CellRow> {
        self.rows
            .iter()
            .filter(|r| r.condition == condition && r.is_complete())
            .fold(None, |best: Option<&CellRow>, r| match best {
                Some(b) => {
                    let (sb, sr) = (b.report.as_ref().unwrap().chrfpp, r.report.as_ref().unwrap().chrfpp);
                    Some(if sr > sb || (sr == sb && r.k < b.k) { r } else { b })
                }
                None => Some(r),
            })
    }

    /// Replaces the row for the same cell, or appends it.
    pub fn upsert(&mut self, row: CellRow) {
        match self.rows.iter_mut().find(|r| r.condition == row.condition && r.k == row.k) {
            Some(slot) => *slot = row,
            None => self.rows.push(row),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), RunnerError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| RunnerError::Json(e.to_string()))?;
        text.push('\n');
        Ok(write_atomic(path, text.as_bytes())?)
    }

    pub fn read_json(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::Json(format!("{}: {e}", path.display())))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One line per cell; scores at full precision.
pub fn ablation_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "model,condition,source,pivot,target,k,bleu,chrfpp,n_segments,n_generations,n_errors,n_empty_hyps,n_context_overflow,status\n",
    );
    for r in &result.rows {
        let pivot = match r.condition {
            Condition::Pivot => result.pivot_lang.as_deref().map(display_code).unwrap_or_default(),
            Condition::Direct => String::new(),
        };
        let (bleu, chrfpp, n_seg, n_empty) = match &r.report {
            Some(m) => (m.bleu.to_string(), m.chrfpp.to_string(), m.n_segments.to_string(), m.n_empty_hyps.to_string()),
            None => Default::default(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&result.model_name),
            r.condition,
            display_code(&result.source_lang),
            pivot,
            display_code(&result.target_lang),
            r.k,
            bleu,
            chrfpp,
            n_seg,
            r.n_generations,
            r.n_errors,
            n_empty,
            r.n_context_overflow,
            r.status()
        );
    }
    out
}

fn score_cells(r: &CellRow) -> (String, String) {
    match &r.report {
        Some(m) => (format!("{:.2}", m.bleu), format!("{:.2}", m.chrfpp)),
        None => ("n/a".into(), "n/a".into()),
    }
}

fn flags(r: &CellRow) -> String {
    match (&r.error, r.context_overflow) {
        (Some(e), _) => format!("failed: {e}"),
        (None, true) => format!("context overflow on {} segment(s)", r.n_context_overflow),
        _ => String::new(),
    }
}

/// Human-readable tables: per-condition k sweeps, a best-k summary with the
/// external baseline, and the scoring signatures.
pub fn summary_markdown(result: &ExperimentResult) -> String {
    let src = display_code(&result.source_lang);
    let tgt = display_code(&result.target_lang);
    let mut md = String::new();
    let _ = writeln!(md, "# {} ({src}→{tgt})\n", result.corpus);
    let _ = writeln!(md, "Model: {}  ", result.model_name);
    let _ = writeln!(md, "Config digest: `{}`\n", result.config_digest);

    for condition in [Condition::Direct, Condition::Pivot] {
        let rows: Vec<&CellRow> = result.rows.iter().filter(|r| r.condition == condition).collect();
        if rows.is_empty() {
            continue;
        }
        let pivot = condition == Condition::Pivot;
        let _ = writeln!(md, "## Ablation over k ({condition})\n");
        if pivot {
            md.push_str("| Model | Source | Pivot | Target | k | BLEU | chrF++ | Notes |\n|---|---|---|---|---|---|---|---|\n");
        } else {
            md.push_str("| Model | Source | Target | k | BLEU | chrF++ | Notes |\n|---|---|---|---|---|---|---|\n");
        }
        for r in rows {
            let (b, c) = score_cells(r);
            let piv = if pivot {
                format!(" {} |", result.pivot_lang.as_deref().map(display_code).unwrap_or_default())
            } else {
                String::new()
            };
            let _ = writeln!(md, "| {} | {src} |{piv} {tgt} | {} | {b} | {c} | {} |", result.model_name, r.k, flags(r));
        }
        md.push('\n');
    }

    md.push_str("## Summary (best k by chrF++)\n\n| Model | Setting | k | BLEU | chrF++ |\n|---|---|---|---|---|\n");
    if let Some(b) = result.baselines.get(&result.pair_key()) {
        let _ = writeln!(md, "| Baseline (external) | {} | | {:.2} | {:.2} |", b.system, b.bleu, b.chrfpp);
    }
    if let Some(r) = result.row(Condition::Direct, 0).filter(|r| r.is_complete()) {
        let (b, c) = score_cells(r);
        let _ = writeln!(md, "| {} | Zero-shot (k=0) | 0 | {b} | {c} |", result.model_name);
    }
    for (condition, label) in [(Condition::Direct, "Direct (best k)"), (Condition::Pivot, "With pivot (best k)")] {
        if let Some(r) = result.best_k(condition) {
            let (b, c) = score_cells(r);
            let _ = writeln!(md, "| {} | {label} | {} | {b} | {c} |", result.model_name, r.k);
        }
    }
    md.push('\n');
    let max_bleu: Vec<String> = [Condition::Direct, Condition::Pivot]
        .into_iter()
        .filter_map(|c| {
            result
                .rows
                .iter()
                .filter(|r| r.condition == c)
                .filter_map(|r| r.report.as_ref().map(|m| (r.k, m.bleu)))
                .fold(None, |best: Option<(usize, f64)>, x| match best {
                    Some(b) if b.1 >= x.1 => Some(b),
                    _ => Some(x),
                })
                .map(|(k, b)| format!("{c}: {b:.2} at k={k}"))
        })
        .collect();
    if !max_bleu.is_empty() {
        let _ = writeln!(md, "Highest BLEU over k: {}\n", max_bleu.join("; "));
    }

    md.push_str("## Signatures\n\n");
    let _ = writeln!(md, "- BLEU: `{}`", result.signatures.bleu);
    let _ = writeln!(md, "- chrF++: `{}`", result.signatures.chrfpp);
    md
}

/// Writes `result.json`, `results.csv` and `summary.md` into `out_dir`.
pub fn emit_report(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    let json = out_dir.join(RESULT_FILE);
    result.write_json(&json)?;
    let csv = out_dir.join(CSV_FILE);
    write_atomic(&csv, ablation_csv(result).as_bytes())?;
    let md = out_dir.join(SUMMARY_FILE);
    write_atomic(&md, summary_markdown(result).as_bytes())?;
    Ok(vec![json, csv, md])
}

/// Pivot-minus-direct significance for one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub lang: String,
    pub model: String,
    pub k: usize,
    pub bleu: BootstrapReport,
    pub chrfpp: BootstrapReport,
}

fn signed(x: f64) -> String {
    format!("{x:+.2}")
}

/// `.08`-style p values, `1.0` when rounding reaches one.
fn p_fmt(p: f64) -> String {
    let s = format!("{p:.2}");
    match s.strip_prefix('0') {
        Some(rest) => rest.to_owned(),
        None => "1.0".into(),
    }
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut md = String::from("| Lang | Model | k | ΔBLEU | p | ΔchrF++ | p |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.lang,
            r.model,
            r.k,
            signed(r.bleu.delta_observed),
            p_fmt(r.bleu.p_value),
            signed(r.chrfpp.delta_observed),
            p_fmt(r.chrfpp.p_value)
        );
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(
            md,
            "\nPaired bootstrap, n={} resamples, seed {}; one-sided p for the better system, (#{{δ≤0}}+1)/(n+1).",
            r.bleu.n_resamples, r.bleu.seed
        );
    }
    md
}

pub fn emit_comparison(rows: &[ComparisonRow], out_dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    let json = out_dir.join("comparison.json");
    let mut text = serde_json::to_string_pretty(rows).map_err(|e| RunnerError::Json(e.to_string()))?;
    text.push('\n');
    write_atomic(&json, text.as_bytes())?;
    let md = out_dir.join("comparison.md");
    write_atomic(&md, comparison_markdown(rows).as_bytes())?;
    Ok(vec![json, md])
}
