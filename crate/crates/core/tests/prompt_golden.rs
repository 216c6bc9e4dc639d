use std::fs;
use std::path::PathBuf;

use pivotmt::corpus::Triplet;
use pivotmt::prompt::{build_prompt, render_chatml, LangLabels};
use pivotmt::retrieval::{Datastore, EmbeddingVector, Hit, RetrievalResult};
use pivotmt::{Condition, PromptBundle};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/prompts").join(name)
}

/// Drops `<|begin_of_text|>`, the colon after role names and all layout
/// whitespace, keeping token order.
fn normalize(text: &str) -> String {
    let mut s = text.replace("<|begin_of_text|>", "");
    for role in ["user", "assistant"] {
        s = s.replace(&format!("<|im_start|>{role}:"), &format!("<|im_start|>{role}"));
    }
    for marker in ["<|im_start|>", "<|im_end|>"] {
        s = s.replace(marker, &format!(" {marker} "));
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn bundle(name: &str, pivot: &str, target: &str, condition: Condition) -> PromptBundle {
    let triplets: Vec<Triplet> = fs::read_to_string(data(&format!("{name}_triplets.jsonl")))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (demos, query) = triplets.split_at(5);
    let vectors = (0..5).map(|_| EmbeddingVector::normalized(vec![1.0]).unwrap()).collect();
    let store = Datastore::new(name, "fixture", 1, demos.to_vec(), vectors).unwrap();
    // Descending similarity keeps the printed demonstration order.
    let hits = RetrievalResult {
        hits: demos.iter().enumerate().map(|(i, t)| Hit { triplet_id: t.id, similarity: 0.9 - i as f64 / 10.0 }).collect(),
    };
    let labels = LangLabels { source: "English".into(), pivot: Some(pivot.into()), target: target.into() };
    build_prompt(&query[0], &hits, &store, condition, &labels, Default::default()).unwrap()
}

fn assert_matches_printed(name: &str, pivot: &str, target: &str) {
    let b = bundle(name, pivot, target, Condition::Pivot);
    assert_eq!(b.k, 5);
    assert_eq!(b.messages.len(), 11);
    b.validate().unwrap();
    let printed = normalize(&fs::read_to_string(data(&format!("{name}_printed.txt"))).unwrap());
    let printed = printed.strip_suffix("Translation: <|im_end|>").unwrap().trim_end();
    assert_eq!(normalize(&render_chatml(&b)), printed);
}

#[test]
fn tunisian_pivot_prompt_matches_printed() {
    assert_matches_printed("tunisian", "Modern Standard Arabic", "Tunisian");
}

#[test]
fn konkani_pivot_prompt_matches_printed() {
    assert_matches_printed("konkani", "Marathi", "Konkani");
}

#[test]
fn direct_prompt_drops_only_the_pivot_line() {
    let pivot = render_chatml(&bundle("konkani", "Marathi", "Konkani", Condition::Pivot));
    let direct = render_chatml(&bundle("konkani", "Marathi", "Konkani", Condition::Direct));
    assert!(!direct.contains("Translation (Marathi)"));
    assert!(!direct.contains("Post-edited"));
    assert_eq!(direct.matches("Translation (Konkani):").count(), 6);
    assert_eq!(pivot.matches("Translation (Marathi):").count(), 6);
}
