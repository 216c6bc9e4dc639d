//! Corpus BLEU and chrF/chrF++ with scorer-compatible signatures, plus the
//! lexical analyses (Jaccard, token fertility, pivot deviation).
//!
//! Scores are always derived from per-segment sufficient statistics, so a
//! corpus score is a pure function of summed [`SufficientStats`]. Resampling
//! in [`crate::stats`] relies on this.

mod analysis;
mod bleu;
mod chrf;
mod tok13a;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    jaccard_similarity, pivot_deviation, token_fertility, BpeCounter, RemoteTokenCounter, TokenCounter,
    WhitespaceCounter,
};
pub use bleu::{corpus_bleu, BleuSegmentStats};
pub use chrf::{chrf, ChrfParams, ChrfSegmentStats, OrderStats};
pub use tok13a::tokenize_13a;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
    #[error("vocabularies use different normalization policies ({0} vs {1})")]
    PolicyMismatch(String, String),
    #[error("corpus has no whitespace-separated words")]
    NoWords,
    #[error("tokenizer: {0}")]
    Tokenizer(String),
}

pub(crate) fn check_lengths(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

/// Additive per-segment statistics from which a corpus score follows.
pub trait SufficientStats: Clone + Send + Sync {
    /// All-zero statistics with the same shape as `self`.
    fn zero_like(&self) -> Self;
    fn accumulate(&mut self, other: &Self);
    /// Score of these (summed) statistics, 0-100.
    fn score(&self) -> f64;
}

/// Corpus score from the sum of `stats`; 0 for an empty slice.
pub fn corpus_score<S: SufficientStats>(stats: &[S]) -> f64 {
    let Some(first) = stats.first() else { return 0.0 };
    let mut total = first.zero_like();
    for s in stats {
        total.accumulate(s);
    }
    total.score()
}

/// Corpus score over `stats[i]` for every `i` in `indices` (repeats allowed).
pub fn corpus_score_indexed<S: SufficientStats>(stats: &[S], indices: &[usize]) -> f64 {
    let Some(first) = stats.first() else { return 0.0 };
    let mut total = first.zero_like();
    for &i in indices {
        total.accumulate(&stats[i]);
    }
    total.score()
}

pub const VERSION_TOKEN: &str = concat!("pivotmt-", env!("CARGO_PKG_VERSION"));

pub fn bleu_signature() -> String {
    format!("nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp|version:{VERSION_TOKEN}")
}

pub fn chrf_signature(params: ChrfParams) -> String {
    format!(
        "nrefs:1|case:mixed|eff:yes|nc:{}|nw:{}|space:no|version:{VERSION_TOKEN}",
        params.char_order, params.word_order
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signatures {
    pub bleu: String,
    pub chrfpp: String,
}

impl Default for Signatures {
    fn default() -> Self {
        Self { bleu: bleu_signature(), chrfpp: chrf_signature(ChrfParams::CHRF_PLUS_PLUS) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub chrfpp: f64,
    pub signatures: Signatures,
    pub n_segments: usize,
    pub n_empty_hyps: usize,
}

/// Per-segment statistics for both reported metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub bleu: BleuSegmentStats,
    pub chrfpp: ChrfSegmentStats,
}

/// BLEU and chrF++ over one corpus.
pub fn score_corpus<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
) -> Result<(MetricReport, Vec<SegmentScores>), MetricError> {
    let (bleu, bs) = corpus_bleu(hyps, refs)?;
    let (chrfpp, cs) = chrf(hyps, refs, ChrfParams::CHRF_PLUS_PLUS)?;
    let report = MetricReport {
        bleu,
        chrfpp,
        signatures: Signatures::default(),
        n_segments: hyps.len(),
        n_empty_hyps: hyps.iter().filter(|h| h.as_ref().trim().is_empty()).count(),
    };
    let segs = bs.into_iter().zip(cs).map(|(bleu, chrfpp)| SegmentScores { bleu, chrfpp }).collect();
    Ok((report, segs))
}

/// Report recomputed from persisted segment statistics.
pub fn report_from_segments(segs: &[SegmentScores], n_empty_hyps: usize) -> MetricReport {
    let b: Vec<_> = segs.iter().map(|s| s.bleu).collect();
    let c: Vec<_> = segs.iter().map(|s| s.chrfpp.clone()).collect();
    MetricReport {
        bleu: corpus_score(&b),
        chrfpp: corpus_score(&c),
        signatures: Signatures::default(),
        n_segments: segs.len(),
        n_empty_hyps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn signatures_keep_behavioral_fields() {
        let s = Signatures::default();
        assert_eq!(s.bleu, "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp|version:pivotmt-0.1.0");
        assert_eq!(s.chrfpp, "nrefs:1|case:mixed|eff:yes|nc:6|nw:2|space:no|version:pivotmt-0.1.0");
        assert_eq!(chrf_signature(ChrfParams::CHRF), "nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no|version:pivotmt-0.1.0");
    }

    #[test]
    fn report_counts_empty_hyps() {
        let (r, segs) = score_corpus(&["a b", " ", ""], &["a b", "c", "d"]).unwrap();
        assert_eq!(r.n_segments, 3);
        assert_eq!(r.n_empty_hyps, 2);
        assert_eq!(report_from_segments(&segs, 2), r);
    }

    fn segment() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["the", "cat", "sat", ".", ",", "3.5", "घर", "دار", "(x)"]), 0..8)
            .prop_map(|w| w.join(" "))
    }

    fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
        prop::collection::vec((segment(), segment()), 1..8)
    }

    fn scores(pairs: &[(String, String)]) -> (f64, f64) {
        let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let (rep, _) = score_corpus(&h, &r).unwrap();
        (rep.bleu, rep.chrfpp)
    }

    proptest! {
        #[test]
        fn scores_in_range(pairs in corpus()) {
            let (b, c) = scores(&pairs);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
            prop_assert!((0.0..=100.0 + 1e-9).contains(&c));
        }

        #[test]
        fn permutation_invariant(pairs in corpus(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (b1, c1) = scores(&pairs);
            let (b2, c2) = scores(&shuffled);
            prop_assert!((b1 - b2).abs() < 1e-9);
            prop_assert!((c1 - c2).abs() < 1e-9);
        }

        // Exponential smoothing divides by the n-gram total, so BLEU is only
        // duplication invariant when no order needs smoothing.
        #[test]
        fn duplication_invariant(pairs in corpus()) {
            let doubled: Vec<_> = pairs.iter().chain(&pairs).cloned().collect();
            let (b1, c1) = scores(&pairs);
            let (b2, c2) = scores(&doubled);
            prop_assert!((c1 - c2).abs() < 1e-9);
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let (_, segs) = corpus_bleu(&h, &r).unwrap();
            let mut total = BleuSegmentStats::default();
            segs.iter().for_each(|s| total.accumulate(s));
            let smoothed = (0..4).any(|n| total.match_counts[n] == 0 && total.total_counts[n] > 0);
            if !smoothed || total.match_counts.iter().all(|&m| m == 0) {
                prop_assert!((b1 - b2).abs() < 1e-9);
            }
        }

        #[test]
        fn summed_stats_match_split_corpora(a in corpus(), b in corpus()) {
            let all: Vec<_> = a.iter().chain(&b).cloned().collect();
            let (h, r): (Vec<_>, Vec<_>) = all.iter().cloned().unzip();
            let (whole, _) = score_corpus(&h, &r).unwrap();
            let (ha, ra): (Vec<_>, Vec<_>) = a.iter().cloned().unzip();
            let (hb, rb): (Vec<_>, Vec<_>) = b.iter().cloned().unzip();
            let (_, mut sa) = score_corpus(&ha, &ra).unwrap();
            let (_, sb) = score_corpus(&hb, &rb).unwrap();
            sa.extend(sb);
            let merged = report_from_segments(&sa, whole.n_empty_hyps);
            prop_assert_eq!(merged, whole);
        }

        #[test]
        fn deviation_equals_plain_chrf(pairs in corpus()) {
            let (p, h): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let direct = chrf(&h, &p, ChrfParams::CHRF).unwrap().0;
            prop_assert_eq!(pivot_deviation(&p, &h).unwrap(), direct);
        }
    }
}
