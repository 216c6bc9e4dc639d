use std::fs;
use std::path::PathBuf;

use pivotmt::metrics::{chrf, corpus_bleu, pivot_deviation, tokenize_13a, ChrfParams};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/metrics").join(name)
}

fn jsonl(name: &str) -> Vec<Value> {
    fs::read_to_string(data(name)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn pairs() -> (Vec<String>, Vec<String>) {
    jsonl("pairs.jsonl")
        .into_iter()
        .map(|v| (v["hyp"].as_str().unwrap().to_owned(), v["ref"].as_str().unwrap().to_owned()))
        .unzip()
}

#[test]
fn corpus_scores_match_reference_scorer() {
    let (h, r) = pairs();
    assert!(h.len() >= 200);
    let oracle: Value = serde_json::from_str(&fs::read_to_string(data("pairs.scores.json")).unwrap()).unwrap();
    let bleu = corpus_bleu(&h, &r).unwrap().0;
    let chrfpp = chrf(&h, &r, ChrfParams::CHRF_PLUS_PLUS).unwrap().0;
    let plain = chrf(&h, &r, ChrfParams::CHRF).unwrap().0;
    assert!((bleu - oracle["bleu"].as_f64().unwrap()).abs() <= 0.01, "bleu {bleu}");
    assert!((chrfpp - oracle["chrfpp"].as_f64().unwrap()).abs() <= 0.01, "chrf++ {chrfpp}");
    assert!((plain - oracle["chrf"].as_f64().unwrap()).abs() <= 0.01, "chrf {plain}");
}

#[test]
fn single_segment_scores_match_reference_scorer() {
    for v in jsonl("segments.jsonl") {
        let h = [v["hyp"].as_str().unwrap()];
        let r = [v["ref"].as_str().unwrap()];
        let bleu = corpus_bleu(&h, &r).unwrap().0;
        let chrfpp = chrf(&h, &r, ChrfParams::CHRF_PLUS_PLUS).unwrap().0;
        let plain = chrf(&h, &r, ChrfParams::CHRF).unwrap().0;
        assert!((bleu - v["bleu"].as_f64().unwrap()).abs() <= 1e-6, "bleu {h:?} {r:?}: {bleu}");
        assert!((chrfpp - v["chrfpp"].as_f64().unwrap()).abs() <= 1e-6, "chrf++ {h:?} {r:?}: {chrfpp}");
        assert!((plain - v["chrf"].as_f64().unwrap()).abs() <= 1e-6, "chrf {h:?} {r:?}: {plain}");
    }
}

#[test]
fn tokenizer_matches_reference() {
    let cases = jsonl("tok13a.jsonl");
    assert!(cases.len() >= 50);
    for v in cases {
        let text = v["text"].as_str().unwrap();
        let want: Vec<String> = serde_json::from_value(v["tokens"].clone()).unwrap();
        assert_eq!(tokenize_13a(text.trim_end()), want, "{text:?}");
    }
}

#[test]
fn deviation_fixture_matches_plain_chrf() {
    let (p, h): (Vec<String>, Vec<String>) = jsonl("deviation.jsonl")
        .into_iter()
        .map(|v| (v["pivot"].as_str().unwrap().to_owned(), v["hyp"].as_str().unwrap().to_owned()))
        .unzip();
    assert_eq!(p.len(), 100);
    assert_eq!(pivot_deviation(&p, &h).unwrap(), chrf(&h, &p, ChrfParams::CHRF).unwrap().0);
    assert_eq!(pivot_deviation(&p, &p).unwrap(), 100.0);
}
