use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tok13a::{py_rstrip, tokenize_13a};
use super::{check_lengths, MetricError, SufficientStats};

pub const MAX_ORDER: usize = 4;

/// Per-segment BLEU sufficient statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuSegmentStats {
    pub match_counts: [u64; MAX_ORDER],
    pub total_counts: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String]) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuSegmentStats {
    pub fn compute(hyp: &str, reference: &str) -> Self {
        let h = tokenize_13a(py_rstrip(hyp));
        let r = tokenize_13a(py_rstrip(reference));
        let ref_counts = ngram_counts(&r);
        let mut s = BleuSegmentStats { hyp_len: h.len() as u64, ref_len: r.len() as u64, ..Default::default() };
        for (gram, count) in ngram_counts(&h) {
            let n = gram.len() - 1;
            s.total_counts[n] += count;
            s.match_counts[n] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
        }
        s
    }
}

impl SufficientStats for BleuSegmentStats {
    fn zero_like(&self) -> Self {
        Self::default()
    }

    fn accumulate(&mut self, o: &Self) {
        for n in 0..MAX_ORDER {
            self.match_counts[n] += o.match_counts[n];
            self.total_counts[n] += o.total_counts[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    /// BLEU with exponential smoothing, on a 0-100 scale.
    fn score(&self) -> f64 {
        let (sys, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if sys < r {
            if sys > 0.0 {
                (1.0 - r / sys).exp()
            } else {
                0.0
            }
        } else {
            1.0
        };
        if self.match_counts.iter().all(|&c| c == 0) {
            return 0.0;
        }
        let mut precisions = [0.0f64; MAX_ORDER];
        let mut smooth = 1.0;
        for (n, p) in precisions.iter_mut().enumerate() {
            let total = self.total_counts[n];
            if total == 0 {
                break;
            }
            *p = if self.match_counts[n] == 0 {
                smooth *= 2.0;
                100.0 / (smooth * total as f64)
            } else {
                100.0 * self.match_counts[n] as f64 / total as f64
            };
        }
        // an order with no n-grams at all forces the score to zero
        if precisions.contains(&0.0) {
            return 0.0;
        }
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        bp * mean_log.exp()
    }
}

/// Corpus BLEU (13a tokenization, mixed case, exponential smoothing).
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
) -> Result<(f64, Vec<BleuSegmentStats>), MetricError> {
    check_lengths(hyps.len(), refs.len())?;
    let stats: Vec<BleuSegmentStats> =
        hyps.iter().zip(refs).map(|(h, r)| BleuSegmentStats::compute(h.as_ref(), r.as_ref())).collect();
    Ok((super::corpus_score(&stats), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_empty() {
        let refs = ["the cat sat on the mat", "a dog barked loudly at night"];
        // exp(ln 100) is not exactly 100 in binary floating point
        assert!((corpus_bleu(&refs, &refs).unwrap().0 - 100.0).abs() < 1e-9);
        assert_eq!(corpus_bleu(&["", ""], &refs).unwrap().0, 0.0);
    }

    #[test]
    fn segment_invariants() {
        let s = BleuSegmentStats::compute("the the the cat", "the cat");
        assert_eq!(s.hyp_len, 4);
        assert_eq!(s.total_counts, [4, 3, 2, 1]);
        assert_eq!(s.match_counts[0], 2);
        for n in 0..MAX_ORDER {
            assert!(s.match_counts[n] <= s.total_counts[n]);
        }
    }

    #[test]
    fn errors() {
        let empty: [&str; 0] = [];
        assert!(matches!(corpus_bleu(&empty, &empty), Err(MetricError::EmptyCorpus)));
        assert!(matches!(corpus_bleu(&["a"], &["a", "b"]), Err(MetricError::LengthMismatch { .. })));
    }
}
