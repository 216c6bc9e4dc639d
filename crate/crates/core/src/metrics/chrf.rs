use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::tok13a::py_split;
use super::{check_lengths, MetricError, SufficientStats};

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl ChrfParams {
    pub const CHRF_PLUS_PLUS: ChrfParams = ChrfParams { char_order: 6, word_order: 2, beta: 2.0 };
    pub const CHRF: ChrfParams = ChrfParams { char_order: 6, word_order: 0, beta: 2.0 };

    fn validate(&self) -> Result<(), MetricError> {
        if self.char_order < 1 || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MetricError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderStats {
    pub hyp_ngrams: u64,
    pub ref_ngrams: u64,
    pub matched: u64,
}

/// Per-segment chrF statistics: char orders 1..=nc followed by word orders
/// 1..=nw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChrfSegmentStats {
    pub params: ChrfParams,
    pub orders: Vec<OrderStats>,
}

fn counts<K: Eq + Hash, I: IntoIterator<Item = K>>(items: I) -> HashMap<K, u64> {
    let mut m = HashMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

fn match_stats<K: Eq + Hash>(hyp: &HashMap<K, u64>, reference: &HashMap<K, u64>) -> OrderStats {
    let mut hyp_count = 0;
    let mut matched = 0;
    for (g, &c) in hyp {
        hyp_count += c;
        if let Some(&r) = reference.get(g) {
            matched += c.min(r);
        }
    }
    OrderStats {
        // hypothesis n-grams only count when the reference has some
        hyp_ngrams: if reference.is_empty() { 0 } else { hyp_count },
        ref_ngrams: reference.values().sum(),
        matched,
    }
}

/// Words with one leading or trailing ASCII punctuation mark split off.
fn chrf_words(text: &str) -> Vec<&str> {
    let is_punct = |c: char| PUNCTUATION.contains(c);
    let mut out = Vec::new();
    for w in py_split(text) {
        let mut chars = w.chars();
        let first = chars.next().unwrap();
        let Some(last) = chars.next_back() else {
            out.push(w);
            continue;
        };
        if is_punct(last) {
            let cut = w.len() - last.len_utf8();
            out.extend([&w[..cut], &w[cut..]]);
        } else if is_punct(first) {
            let cut = first.len_utf8();
            out.extend([&w[..cut], &w[cut..]]);
        } else {
            out.push(w);
        }
    }
    out
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    counts(chars.windows(n))
}

fn word_ngrams(words: &[&str], n: usize) -> HashMap<String, u64> {
    counts(words.windows(n).map(|w| w.join(" ")))
}

impl ChrfSegmentStats {
    pub fn compute(hyp: &str, reference: &str, params: ChrfParams) -> Self {
        let hc: Vec<char> = py_split(hyp).flat_map(str::chars).collect();
        let rc: Vec<char> = py_split(reference).flat_map(str::chars).collect();
        let mut orders = Vec::with_capacity(params.char_order + params.word_order);
        for n in 1..=params.char_order {
            orders.push(match_stats(&char_ngrams(&hc, n), &char_ngrams(&rc, n)));
        }
        if params.word_order > 0 {
            let hw = chrf_words(hyp);
            let rw = chrf_words(reference);
            for n in 1..=params.word_order {
                orders.push(match_stats(&word_ngrams(&hw, n), &word_ngrams(&rw, n)));
            }
        }
        Self { params, orders }
    }
}

impl SufficientStats for ChrfSegmentStats {
    fn zero_like(&self) -> Self {
        Self { params: self.params, orders: vec![OrderStats::default(); self.orders.len()] }
    }

    fn accumulate(&mut self, o: &Self) {
        debug_assert_eq!(self.orders.len(), o.orders.len());
        for (a, b) in self.orders.iter_mut().zip(&o.orders) {
            a.hyp_ngrams += b.hyp_ngrams;
            a.ref_ngrams += b.ref_ngrams;
            a.matched += b.matched;
        }
    }

    /// F-beta over effective orders, on a 0-100 scale.
    fn score(&self) -> f64 {
        let (mut p, mut r, mut eff) = (0.0, 0.0, 0usize);
        for o in &self.orders {
            if o.hyp_ngrams > 0 && o.ref_ngrams > 0 {
                p += o.matched as f64 / o.hyp_ngrams as f64;
                r += o.matched as f64 / o.ref_ngrams as f64;
                eff += 1;
            }
        }
        if eff == 0 {
            return 0.0;
        }
        p /= eff as f64;
        r /= eff as f64;
        if p + r == 0.0 {
            return 0.0;
        }
        let b2 = self.params.beta * self.params.beta;
        100.0 * (1.0 + b2) * p * r / (b2 * p + r)
    }
}

pub fn chrf<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    params: ChrfParams,
) -> Result<(f64, Vec<ChrfSegmentStats>), MetricError> {
    params.validate()?;
    check_lengths(hyps.len(), refs.len())?;
    let stats: Vec<ChrfSegmentStats> =
        hyps.iter().zip(refs).map(|(h, r)| ChrfSegmentStats::compute(h.as_ref(), r.as_ref(), params)).collect();
    Ok((super::corpus_score(&stats), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_split_follows_reference_rules() {
        assert_eq!(chrf_words("(hi) a, \"b ok."), ["(hi", ")", "a", ",", "\"", "b", "ok", "."]);
        assert_eq!(chrf_words("!"), ["!"]);
        assert_eq!(chrf_words("नमस्ते।"), ["नमस्ते।"]);
    }

    #[test]
    fn identity_and_disjoint() {
        let p = ChrfParams::CHRF_PLUS_PLUS;
        assert_eq!(chrf(&["a quick test"], &["a quick test"], p).unwrap().0, 100.0);
        assert_eq!(chrf(&["abcd"], &["wxyz"], p).unwrap().0, 0.0);
    }

    #[test]
    fn stats_shape_and_bounds() {
        let s = ChrfSegmentStats::compute("aab b", "ab", ChrfParams::CHRF_PLUS_PLUS);
        assert_eq!(s.orders.len(), 8);
        assert_eq!(s.orders[0], OrderStats { hyp_ngrams: 4, ref_ngrams: 2, matched: 2 });
        for o in &s.orders {
            assert!(o.matched <= o.hyp_ngrams.min(o.ref_ngrams));
        }
    }

    #[test]
    fn invalid_params() {
        let bad = ChrfParams { char_order: 0, ..ChrfParams::CHRF };
        assert!(chrf(&["a"], &["a"], bad).is_err());
    }
}
