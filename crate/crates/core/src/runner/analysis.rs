use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TokenizerSpec;
use super::report::{display_code, ExperimentResult};
use super::RunnerError;
use crate::corpus::{extract_vocabulary, Corpus, NormalizationPolicy};
use crate::metrics::{
    chrf_signature, jaccard_similarity, pivot_deviation, token_fertility, BpeCounter, ChrfParams, RemoteTokenCounter,
    TokenCounter, WhitespaceCounter,
};
use crate::prompt::Condition;
use crate::util::write_atomic;

pub fn build_token_counter(spec: &TokenizerSpec) -> Result<Box<dyn TokenCounter>, RunnerError> {
    Ok(match spec {
        TokenizerSpec::Whitespace => Box::new(WhitespaceCounter),
        TokenizerSpec::Bpe { vocab, merges, word_prefix } => Box::new(BpeCounter::from_files(vocab, merges, word_prefix)?),
        TokenizerSpec::Remote { model, endpoint } => {
            let ep = endpoint.clone().ok_or_else(|| RunnerError::Config(format!("tokenizer `{model}` has no endpoint")))?;
            Box::new(RemoteTokenCounter::new(ep, model.clone()))
        }
    })
}

#[derive(Default)]
pub struct AnalysisOptions<'a> {
    pub jaccard: bool,
    /// Policies to compute Jaccard under; empty means both.
    pub policies: Vec<NormalizationPolicy>,
    /// Named token counters (table column name, counter).
    pub tokenizers: Vec<(String, Box<dyn TokenCounter>)>,
    /// Generations to compare against the pivot column.
    pub generations: Option<&'a ExperimentResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardRow {
    pub pair: String,
    pub policy: NormalizationPolicy,
    pub vocab_a: usize,
    pub vocab_b: usize,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FertilityRow {
    pub dataset: String,
    pub language: String,
    pub tokenizer: String,
    pub fertility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub language: String,
    pub model: String,
    pub k: usize,
    pub chrf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub corpus: String,
    pub jaccard: Vec<JaccardRow>,
    pub fertility: Vec<FertilityRow>,
    pub deviation: Vec<DeviationRow>,
    /// Signature of the chrF variant used for deviation (plain chrF, nw=0).
    pub deviation_signature: String,
}

/// Language columns of the corpus with all their texts (train and test).
fn columns(corpus: &Corpus) -> Vec<(String, Vec<&str>)> {
    let all: Vec<_> = corpus.train().iter().chain(corpus.test()).collect();
    let langs = corpus.languages();
    let mut cols = vec![(langs.source.clone(), all.iter().map(|t| t.source.as_str()).collect())];
    if let Some(p) = &langs.pivot {
        cols.push((p.clone(), all.iter().filter_map(|t| t.pivot.as_deref()).collect()));
    }
    cols.push((langs.target.clone(), all.iter().map(|t| t.target.as_str()).collect()));
    cols
}

/// Jaccard pairs, token fertility and pivot deviation tables.
pub fn analyze(corpus: &Corpus, options: &AnalysisOptions<'_>) -> Result<AnalysisReport, RunnerError> {
    let cols = columns(corpus);
    let mut jaccard = Vec::new();
    if options.jaccard {
        let policies = if options.policies.is_empty() {
            vec![NormalizationPolicy::RawWs, NormalizationPolicy::Folded]
        } else {
            options.policies.clone()
        };
        for policy in policies {
            let vocabs: Vec<_> = cols.iter().map(|(l, t)| extract_vocabulary(l, t, policy)).collect();
            for i in 0..vocabs.len() {
                for j in i + 1..vocabs.len() {
                    jaccard.push(JaccardRow {
                        pair: format!("{}-{}", display_code(&vocabs[i].lang), display_code(&vocabs[j].lang)),
                        policy,
                        vocab_a: vocabs[i].len(),
                        vocab_b: vocabs[j].len(),
                        jaccard: jaccard_similarity(&vocabs[i], &vocabs[j])?,
                    });
                }
            }
        }
    }

    let mut fertility = Vec::new();
    let dataset = display_code(&corpus.languages().target);
    for (lang, texts) in &cols {
        for (name, counter) in &options.tokenizers {
            fertility.push(FertilityRow {
                dataset: dataset.clone(),
                language: display_code(lang),
                tokenizer: name.clone(),
                fertility: token_fertility(texts, counter.as_ref())?,
            });
        }
    }

    let mut deviation = Vec::new();
    if let Some(result) = options.generations {
        for row in result.rows.iter().filter(|r| r.condition == Condition::Pivot && r.k >= 1 && r.is_complete()) {
            let mut pivots = Vec::with_capacity(row.segments.len());
            for s in &row.segments {
                let t = corpus
                    .test()
                    .iter()
                    .find(|t| t.id == s.query_id)
                    .ok_or_else(|| RunnerError::TestSetMismatch(format!("query {} not in corpus", s.query_id)))?;
                pivots.push(t.pivot.clone().unwrap_or_default());
            }
            let hyps: Vec<&str> = row.segments.iter().map(|s| s.hypothesis.as_str()).collect();
            deviation.push(DeviationRow {
                language: dataset.clone(),
                model: result.model_name.clone(),
                k: row.k,
                chrf: pivot_deviation(&pivots, &hyps)?,
            });
        }
    }

    Ok(AnalysisReport {
        corpus: corpus.name().to_owned(),
        jaccard,
        fertility,
        deviation,
        deviation_signature: chrf_signature(ChrfParams::CHRF),
    })
}

impl AnalysisReport {
    pub fn markdown(&self) -> String {
        let mut md = format!("# Analysis: {}\n\n", self.corpus);
        if !self.jaccard.is_empty() {
            md.push_str("## Word-level Jaccard similarity\n\n| Language Pair | Policy | Vocab A | Vocab B | Jaccard |\n|---|---|---|---|---|\n");
            for r in &self.jaccard {
                let _ = writeln!(md, "| {} | {} | {} | {} | {:.4} |", r.pair, r.policy, r.vocab_a, r.vocab_b, r.jaccard);
            }
            md.push('\n');
        }
        if !self.fertility.is_empty() {
            let mut names: Vec<&str> = self.fertility.iter().map(|r| r.tokenizer.as_str()).collect();
            names.dedup();
            let _ = writeln!(md, "## Tokens per word\n\n| Dataset | Language | {} |", names.join(" | "));
            let _ = writeln!(md, "|---|---|{}", "---|".repeat(names.len()));
            for chunk in self.fertility.chunks(names.len()) {
                let vals: Vec<String> = chunk.iter().map(|r| format!("{:.2}", r.fertility)).collect();
                let _ = writeln!(md, "| {} | {} | {} |", chunk[0].dataset, chunk[0].language, vals.join(" | "));
            }
            md.push('\n');
        }
        if !self.deviation.is_empty() {
            md.push_str("## chrF between pivot and generated translations\n\n| Language | Model | k | chrF |\n|---|---|---|---|\n");
            for r in &self.deviation {
                let _ = writeln!(md, "| {} | {} | {} | {:.2} |", r.language, r.model, r.k, r.chrf);
            }
            let _ = writeln!(md, "\nSignature: `{}`", self.deviation_signature);
        }
        md
    }

    /// Writes `analysis.json` and `analysis.md` into `out_dir`.
    pub fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
        let json = out_dir.join("analysis.json");
        let mut text = serde_json::to_string_pretty(self).map_err(|e| RunnerError::Json(e.to_string()))?;
        text.push('\n');
        write_atomic(&json, text.as_bytes())?;
        let md = out_dir.join("analysis.md");
        write_atomic(&md, self.markdown().as_bytes())?;
        Ok(vec![json, md])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Languages, Triplet};
    use crate::metrics::chrf;
    use crate::runner::{CellRow, SegmentRecord};

    fn corpus() -> Corpus {
        let t = |id, s: &str, p: &str, g: &str| Triplet::new(id, s, Some(p.into()), g);
        Corpus::new(
            "toy",
            Languages { source: "eng".into(), pivot: Some("mar".into()), target: "gom".into() },
            vec![t(1, "a b c", "x y", "x z"), t(2, "d e", "y w", "w q")],
            vec![t(3, "f g", "p r", "p s")],
        )
        .unwrap()
    }

    #[test]
    fn jaccard_pairs_in_table_order() {
        let opts = AnalysisOptions { jaccard: true, policies: vec![NormalizationPolicy::Folded], ..Default::default() };
        let r = analyze(&corpus(), &opts).unwrap();
        let pairs: Vec<_> = r.jaccard.iter().map(|j| j.pair.as_str()).collect();
        assert_eq!(pairs, ["Eng-Mar", "Eng-Gom", "Mar-Gom"]);
        // mar {x,y,w,p,r}, gom {x,z,w,q,p,s}: {x,w,p} / 8
        assert_eq!(r.jaccard[2].jaccard, 3.0 / 8.0);
        assert_eq!(r.jaccard[0].jaccard, 0.0);
        assert!(r.markdown().contains("| Mar-Gom | folded | 5 | 6 | 0.3750 |"));
    }

    #[test]
    fn whitespace_fertility_is_one() {
        let opts = AnalysisOptions { tokenizers: vec![("ws".into(), Box::new(WhitespaceCounter))], ..Default::default() };
        let r = analyze(&corpus(), &opts).unwrap();
        assert_eq!(r.fertility.len(), 3);
        assert!(r.fertility.iter().all(|f| f.fertility == 1.0));
    }

    #[test]
    fn deviation_matches_direct_chrf() {
        let (_, segs) = crate::metrics::score_corpus(&["p s"], &["p s"]).unwrap();
        let seg = SegmentRecord {
            query_id: 3,
            prompt_hash: "h".into(),
            hypothesis: "p rr".into(),
            reference: "p s".into(),
            context_overflow: false,
            scores: segs[0].clone(),
        };
        let mut row = CellRow::failed(Condition::Pivot, 1, String::new());
        row.error = None;
        row.report = Some(crate::metrics::report_from_segments(&segs, 0));
        row.segments = vec![seg];
        let result = ExperimentResult {
            config_digest: String::new(),
            corpus: "toy".into(),
            source_lang: "eng".into(),
            pivot_lang: Some("mar".into()),
            target_lang: "gom".into(),
            model_id: "m".into(),
            model_name: "m".into(),
            signatures: Default::default(),
            baselines: Default::default(),
            rows: vec![row],
        };
        let opts = AnalysisOptions { generations: Some(&result), ..Default::default() };
        let r = analyze(&corpus(), &opts).unwrap();
        assert_eq!(r.deviation.len(), 1);
        assert_eq!(r.deviation[0].chrf, chrf(&["p rr"], &["p r"], ChrfParams::CHRF).unwrap().0);
    }
}
