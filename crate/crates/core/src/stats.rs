//! Paired bootstrap resampling over per-segment metric statistics.
//!
//! Resample `i` draws its indices from a ChaCha8 generator seeded with
//! `seed` on stream `i`, so the result does not depend on how resamples are
//! scheduled across threads.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{corpus_score, corpus_score_indexed, SegmentScores, SufficientStats};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired systems differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no segments to resample")]
    Empty,
    #[error("number of resamples must be at least 1")]
    NoResamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Chrfpp,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Chrfpp => "chrfpp",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bleu" => Ok(Metric::Bleu),
            "chrfpp" | "chrf++" => Ok(Metric::Chrfpp),
            other => Err(format!("unknown metric `{other}` (expected bleu or chrfpp)")),
        }
    }
}

/// Which system the one-sided test was run in favour of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// H1: A better than B (used when `delta_observed >= 0`).
    ABetter,
    /// H1: B better than A (roles swapped because `delta_observed < 0`).
    BBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub metric: Metric,
    /// Score of A minus score of B on the full test set.
    pub delta_observed: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub n_resamples: usize,
    pub seed: u64,
    pub n_segments: usize,
    pub score_a: f64,
    pub score_b: f64,
    /// Per-resample A minus B, in resample order.
    pub deltas: Vec<f64>,
}

fn resample_indices(seed: u64, resample: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(resample as u64);
    (0..m).map(|_| rng.gen_range(0..m)).collect()
}

/// One-sided add-one p value: `(#{d <= 0} + 1) / (n + 1)` where `d` is the
/// resampled advantage of the favoured system.
pub fn p_value_from_deltas(deltas: &[f64], direction: Direction) -> f64 {
    let not_better = deltas
        .iter()
        .filter(|&&d| match direction {
            Direction::ABetter => d <= 0.0,
            Direction::BBetter => -d <= 0.0,
        })
        .count();
    (not_better + 1) as f64 / (deltas.len() + 1) as f64
}

/// Paired bootstrap over any additive statistic.
pub fn paired_bootstrap_stats<S: SufficientStats>(
    a: &[S],
    b: &[S],
    metric: Metric,
    n: usize,
    seed: u64,
) -> Result<BootstrapReport, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    if n < 1 {
        return Err(StatsError::NoResamples);
    }
    let m = a.len();
    let (score_a, score_b) = (corpus_score(a), corpus_score(b));
    let delta_observed = score_a - score_b;
    let direction = if delta_observed < 0.0 { Direction::BBetter } else { Direction::ABetter };
    let deltas: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = resample_indices(seed, i, m);
            corpus_score_indexed(a, &idx) - corpus_score_indexed(b, &idx)
        })
        .collect();
    Ok(BootstrapReport {
        metric,
        delta_observed,
        p_value: p_value_from_deltas(&deltas, direction),
        direction,
        n_resamples: n,
        seed,
        n_segments: m,
        score_a,
        score_b,
        deltas,
    })
}

/// Paired bootstrap on the BLEU or chrF++ part of persisted segment scores.
pub fn paired_bootstrap(
    a: &[SegmentScores],
    b: &[SegmentScores],
    metric: Metric,
    n: usize,
    seed: u64,
) -> Result<BootstrapReport, StatsError> {
    match metric {
        Metric::Bleu => {
            let sa: Vec<_> = a.iter().map(|s| s.bleu).collect();
            let sb: Vec<_> = b.iter().map(|s| s.bleu).collect();
            paired_bootstrap_stats(&sa, &sb, metric, n, seed)
        }
        Metric::Chrfpp => {
            let sa: Vec<_> = a.iter().map(|s| s.chrfpp.clone()).collect();
            let sb: Vec<_> = b.iter().map(|s| s.chrfpp.clone()).collect();
            paired_bootstrap_stats(&sa, &sb, metric, n, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::score_corpus;
    use proptest::prelude::*;

    /// Toy additive statistic: a corpus score is the mean of per-segment values.
    #[derive(Debug, Clone, PartialEq)]
    struct Mean {
        sum: f64,
        n: u32,
    }

    fn means(v: &[f64]) -> Vec<Mean> {
        v.iter().map(|&x| Mean { sum: x, n: 1 }).collect()
    }

    impl SufficientStats for Mean {
        fn zero_like(&self) -> Self {
            Mean { sum: 0.0, n: 0 }
        }
        fn accumulate(&mut self, o: &Self) {
            self.sum += o.sum;
            self.n += o.n;
        }
        fn score(&self) -> f64 {
            if self.n == 0 {
                0.0
            } else {
                self.sum / self.n as f64
            }
        }
    }

    #[test]
    fn identical_systems() {
        let a = means(&[1.0, 5.0, 2.0, 7.0]);
        let r = paired_bootstrap_stats(&a, &a, Metric::Bleu, 500, 1).unwrap();
        assert_eq!(r.delta_observed, 0.0);
        assert_eq!(r.direction, Direction::ABetter);
        assert!(r.p_value >= 0.5);
    }

    #[test]
    fn roles_swap_for_negative_delta() {
        let a = means(&[1.0, 1.0, 2.0]);
        let b = means(&[3.0, 3.0, 3.0]);
        let ab = paired_bootstrap_stats(&a, &b, Metric::Bleu, 200, 9).unwrap();
        let ba = paired_bootstrap_stats(&b, &a, Metric::Bleu, 200, 9).unwrap();
        assert_eq!(ab.direction, Direction::BBetter);
        assert_eq!(ba.direction, Direction::ABetter);
        assert_eq!(ab.delta_observed, -ba.delta_observed);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.p_value, 1.0 / 201.0);
    }

    #[test]
    fn input_errors() {
        let a = means(&[1.0]);
        assert!(matches!(paired_bootstrap_stats(&a, &means(&[]), Metric::Bleu, 10, 0), Err(StatsError::LengthMismatch(..))));
        assert!(matches!(paired_bootstrap_stats(&means(&[]), &means(&[]), Metric::Bleu, 10, 0), Err(StatsError::Empty)));
        assert!(matches!(paired_bootstrap_stats(&a, &a, Metric::Bleu, 0, 0), Err(StatsError::NoResamples)));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("chrF++".parse::<Metric>().unwrap(), Metric::Chrfpp);
        assert_eq!("bleu".parse::<Metric>().unwrap(), Metric::Bleu);
        assert!("ter".parse::<Metric>().is_err());
    }

    #[test]
    fn exhaustive_oracle_on_three_segments() {
        let a = means(&[3.0, 0.0, 1.0]);
        let b = means(&[1.0, 2.0, 1.0]);
        let mut not_better = 0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let idx = [i, j, k];
                    if corpus_score_indexed(&a, &idx) - corpus_score_indexed(&b, &idx) <= 0.0 {
                        not_better += 1;
                    }
                }
            }
        }
        let exact = not_better as f64 / 27.0;
        let r = paired_bootstrap_stats(&a, &b, Metric::Bleu, 10_000, 42).unwrap();
        assert!((r.p_value - exact).abs() <= 0.02, "{} vs {exact}", r.p_value);
    }

    #[test]
    fn real_metric_report_and_json() {
        let refs = ["the cat sat on the mat", "a dog barked", "rain fell all night"];
        let (_, sa) = score_corpus(&["the cat sat on a mat", "a dog barked", "rain all night"], &refs).unwrap();
        let (_, sb) = score_corpus(&["cat mat", "dog", "night rain fell"], &refs).unwrap();
        for metric in [Metric::Bleu, Metric::Chrfpp] {
            let r = paired_bootstrap(&sa, &sb, metric, 300, 5).unwrap();
            assert!(r.delta_observed > 0.0);
            let back: BootstrapReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            assert_eq!(back, r);
        }
    }

    proptest! {
        #[test]
        fn deterministic_and_bounded(vals in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..12), seed in any::<u64>()) {
            let (va, vb): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
            let (a, b) = (means(&va), means(&vb));
            let r1 = paired_bootstrap_stats(&a, &b, Metric::Chrfpp, 64, seed).unwrap();
            let r2 = paired_bootstrap_stats(&a, &b, Metric::Chrfpp, 64, seed).unwrap();
            prop_assert_eq!(&r1, &r2);
            prop_assert!(r1.p_value >= 1.0 / 65.0 && r1.p_value <= 1.0);
            let swapped = paired_bootstrap_stats(&b, &a, Metric::Chrfpp, 64, seed).unwrap();
            prop_assert_eq!(swapped.delta_observed, -r1.delta_observed);
            let identity: Vec<usize> = (0..a.len()).collect();
            let d = corpus_score_indexed(&a, &identity) - corpus_score_indexed(&b, &identity);
            prop_assert_eq!(d, r1.delta_observed);
        }
    }
}
