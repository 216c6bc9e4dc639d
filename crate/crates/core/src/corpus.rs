//! Multiparallel triplet corpora: loading, splitting, leakage checks and
//! vocabulary extraction.
//!
//! On disk a corpus is UTF-8 line-JSON, one record per line:
//!
//! ```text
//! {"id": 0, "src": "always and always", "piv": "دائماً", "tgt": "ابدا ابدا"}
//! ```
//!
//! `piv` may be omitted for corpora without a pivot column. [`write_triplets`]
//! emits exactly this canonical layout, so a file written by it survives a
//! load/write cycle byte for byte.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::util;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("duplicate triplet id {0}")]
    DuplicateId(u64),
    #[error("triplet {id}: field `{field}` is empty")]
    EmptyField { id: u64, field: &'static str },
    #[error("cannot split {available} records into {n_train} train + {n_test} test")]
    InsufficientRecords { available: usize, n_train: usize, n_test: usize },
    #[error("{} test source(s) appear verbatim in the train split (first: test id {})", .0.violations.len(), .0.violations[0].test_id)]
    Leakage(LeakageReport),
    #[error("invalid corpus descriptor: {0}")]
    Descriptor(String),
}

/// One aligned (English source, pivot translation, target translation) record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplet {
    pub id: u64,
    #[serde(rename = "src")]
    pub source: String,
    #[serde(rename = "piv", default, skip_serializing_if = "Option::is_none")]
    pub pivot: Option<String>,
    #[serde(rename = "tgt")]
    pub target: String,
}

impl Triplet {
    pub fn new(id: u64, source: impl Into<String>, pivot: Option<String>, target: impl Into<String>) -> Self {
        Self { id, source: source.into(), pivot, target: target.into() }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.source.trim().is_empty() {
            return Err(CorpusError::EmptyField { id: self.id, field: "src" });
        }
        if matches!(&self.pivot, Some(p) if p.trim().is_empty()) {
            return Err(CorpusError::EmptyField { id: self.id, field: "piv" });
        }
        if self.target.trim().is_empty() {
            return Err(CorpusError::EmptyField { id: self.id, field: "tgt" });
        }
        Ok(())
    }

    /// Canonical single-line JSON form used by corpus files.
    pub fn to_line(&self) -> String {
        let quote = |s: &str| serde_json::to_string(s).expect("string serialization is infallible");
        match &self.pivot {
            Some(p) => format!(
                "{{\"id\": {}, \"src\": {}, \"piv\": {}, \"tgt\": {}}}",
                self.id,
                quote(&self.source),
                quote(p),
                quote(&self.target)
            ),
            None => format!(
                "{{\"id\": {}, \"src\": {}, \"tgt\": {}}}",
                self.id,
                quote(&self.source),
                quote(&self.target)
            ),
        }
    }
}

/// ISO-style language codes of the three corpus columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Languages {
    pub source: String,
    pub pivot: Option<String>,
    pub target: String,
}

/// A validated train/test corpus.
///
/// Ids are unique across both splits. Verbatim test/train source overlap is
/// rejected by [`load_corpus`]; [`Corpus::validate_no_leakage`] reports it for
/// corpora assembled by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    languages: Languages,
    train: Vec<Triplet>,
    test: Vec<Triplet>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        languages: Languages,
        train: Vec<Triplet>,
        test: Vec<Triplet>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(train.len() + test.len());
        for t in train.iter().chain(&test) {
            t.validate()?;
            if !seen.insert(t.id) {
                return Err(CorpusError::DuplicateId(t.id));
            }
            if languages.pivot.is_some() && t.pivot.is_none() {
                return Err(CorpusError::EmptyField { id: t.id, field: "piv" });
            }
        }
        Ok(Self { name: name.into(), languages, train, test })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn languages(&self) -> &Languages {
        &self.languages
    }

    pub fn train(&self) -> &[Triplet] {
        &self.train
    }

    pub fn test(&self) -> &[Triplet] {
        &self.test
    }

    /// True when every record carries a pivot translation.
    pub fn has_pivot(&self) -> bool {
        self.train.iter().chain(&self.test).all(|t| t.pivot.is_some())
    }

    pub fn validate_no_leakage(&self) -> LeakageReport {
        validate_no_leakage(&self.train, &self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageViolation {
    pub test_id: u64,
    pub train_ids: Vec<u64>,
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub violations: Vec<LeakageViolation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn leakage_key(text: &str) -> String {
    text.trim().nfc().collect()
}

/// Lists every test source that appears verbatim (after NFC and trimming)
/// among the train sources. Paraphrases are not detected.
pub fn validate_no_leakage(train: &[Triplet], test: &[Triplet]) -> LeakageReport {
    let mut index: HashMap<String, Vec<u64>> = HashMap::new();
    for t in train {
        index.entry(leakage_key(&t.source)).or_default().push(t.id);
    }
    let violations = test
        .iter()
        .filter_map(|t| {
            index.get(&leakage_key(&t.source)).map(|ids| LeakageViolation {
                test_id: t.id,
                train_ids: ids.clone(),
                source: t.source.clone(),
            })
        })
        .collect();
    LeakageReport { violations }
}

/// Reads a line-JSON triplet file, preserving record order. Blank lines are
/// skipped; every other line must be a complete record.
pub fn read_triplets(path: &Path) -> Result<Vec<Triplet>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_path_buf()),
        _ => CorpusError::Io { path: path.to_path_buf(), source: e },
    })?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triplet = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        t.validate()?;
        if !seen.insert(t.id) {
            return Err(CorpusError::DuplicateId(t.id));
        }
        out.push(t);
    }
    Ok(out)
}

/// Writes triplets in the canonical line format (crash-safe replace).
pub fn write_triplets(path: &Path, triplets: &[Triplet]) -> io::Result<()> {
    let mut buf = Vec::new();
    for t in triplets {
        writeln!(buf, "{}", t.to_line())?;
    }
    util::write_atomic(path, &buf)
}

/// Deterministic seeded partition into disjoint train/test splits. Records
/// keep their input order within each split.
pub fn split_corpus(
    triplets: Vec<Triplet>,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<Triplet>, Vec<Triplet>), CorpusError> {
    if n_train + n_test > triplets.len() {
        return Err(CorpusError::InsufficientRecords { available: triplets.len(), n_train, n_test });
    }
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..n_train + n_test].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut slots: Vec<Option<Triplet>> = triplets.into_iter().map(Some).collect();
    let mut take = |idx: Vec<usize>| idx.into_iter().map(|i| slots[i].take().unwrap()).collect::<Vec<_>>();
    let train = take(train_idx);
    let test = take(test_idx);
    Ok((train, test))
}

/// Config-file section describing where a corpus lives and how to split it.
///
/// Either `train` + `test` (pre-split files) or `file` + `n_train` + `n_test`
/// (+ optional `seed`) must be given. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDescriptor {
    pub name: String,
    pub source_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_lang: Option<String>,
    pub target_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

enum Layout<'a> {
    PreSplit { train: &'a Path, test: &'a Path },
    Single { file: &'a Path, n_train: usize, n_test: usize, seed: u64 },
}

impl CorpusDescriptor {
    fn layout(&self) -> Result<Layout<'_>, CorpusError> {
        match (&self.train, &self.test, &self.file) {
            (Some(train), Some(test), None) => Ok(Layout::PreSplit { train, test }),
            (None, None, Some(file)) => match (self.n_train, self.n_test) {
                (Some(n_train), Some(n_test)) => {
                    Ok(Layout::Single { file, n_train, n_test, seed: self.seed.unwrap_or(0) })
                }
                _ => Err(CorpusError::Descriptor(format!(
                    "corpus `{}`: `file` requires both `n_train` and `n_test`",
                    self.name
                ))),
            },
            _ => Err(CorpusError::Descriptor(format!(
                "corpus `{}`: give either `train` and `test`, or `file` with split sizes",
                self.name
            ))),
        }
    }

    pub fn languages(&self) -> Languages {
        Languages {
            source: self.source_lang.clone(),
            pivot: self.pivot_lang.clone(),
            target: self.target_lang.clone(),
        }
    }
}

/// Loads and validates a corpus described by `descriptor`, rejecting
/// verbatim test/train leakage.
pub fn load_corpus(descriptor: &CorpusDescriptor, base_dir: &Path) -> Result<Corpus, CorpusError> {
    let (train, test) = match descriptor.layout()? {
        Layout::PreSplit { train, test } => {
            (read_triplets(&base_dir.join(train))?, read_triplets(&base_dir.join(test))?)
        }
        Layout::Single { file, n_train, n_test, seed } => {
            split_corpus(read_triplets(&base_dir.join(file))?, n_train, n_test, seed)?
        }
    };
    let corpus = Corpus::new(descriptor.name.clone(), descriptor.languages(), train, test)?;
    let report = corpus.validate_no_leakage();
    if !report.is_clean() {
        return Err(CorpusError::Leakage(report));
    }
    Ok(corpus)
}

/// Word normalization applied before building a vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationPolicy {
    /// NFC, then split on Unicode whitespace.
    RawWs,
    /// NFC, whitespace split, strip leading/trailing Unicode punctuation,
    /// lowercase (full Unicode lowercase mapping). Words that are pure
    /// punctuation are dropped.
    #[default]
    Folded,
}

impl NormalizationPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RawWs => "raw-ws",
            Self::Folded => "folded",
        }
    }

    pub fn normalize_words(self, text: &str) -> Vec<String> {
        static EDGE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{P}+|\p{P}+$").unwrap());
        let nfc: String = text.nfc().collect();
        match self {
            Self::RawWs => nfc.split_whitespace().map(str::to_owned).collect(),
            Self::Folded => nfc
                .split_whitespace()
                .filter_map(|w| {
                    let stripped = EDGE_PUNCT.replace_all(w, "");
                    let folded: String = stripped.to_lowercase().nfc().collect();
                    (!folded.is_empty()).then_some(folded)
                })
                .collect(),
        }
    }
}

impl fmt::Display for NormalizationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw-ws" => Ok(Self::RawWs),
            "folded" => Ok(Self::Folded),
            other => Err(format!("unknown normalization policy `{other}` (expected raw-ws or folded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub lang: String,
    pub words: BTreeSet<String>,
    pub policy: NormalizationPolicy,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn extract_vocabulary<I, S>(lang: &str, texts: I, policy: NormalizationPolicy) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let words = texts.into_iter().flat_map(|t| policy.normalize_words(t.as_ref())).collect();
    Vocabulary { lang: lang.to_owned(), words, policy }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(id: u64, src: &str) -> Triplet {
        Triplet::new(id, src, Some(format!("piv {id}")), format!("tgt {id}"))
    }

    fn langs() -> Languages {
        Languages { source: "eng".into(), pivot: Some("mar".into()), target: "gom".into() }
    }

    fn write_lines(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        p
    }

    #[test]
    fn reads_three_line_file_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let lines: Vec<String> = (0..3).map(|i| tri(i, &format!("s{i}")).to_line()).collect();
        let p = write_lines(dir.path(), "c.jsonl", &lines);
        let ts = read_triplets(&p).unwrap();
        assert_eq!(ts.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![tri(7, "a").to_line(), tri(7, "b").to_line()];
        let p = write_lines(dir.path(), "c.jsonl", &lines);
        match read_triplets(&p) {
            Err(CorpusError::DuplicateId(7)) => {}
            other => panic!("expected duplicate id 7, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![tri(0, "a").to_line(), "{\"id\": 1, \"src\": ".to_string()];
        let p = write_lines(dir.path(), "c.jsonl", &lines);
        match read_triplets(&p) {
            Err(CorpusError::Malformed { line: 2, .. }) => {}
            other => panic!("expected malformed line 2, got {other:?}"),
        }
    }

    #[test]
    fn empty_field_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(dir.path(), "c.jsonl", &[r#"{"id": 3, "src": "  ", "piv": "x", "tgt": "y"}"#.into()]);
        assert!(matches!(read_triplets(&p), Err(CorpusError::EmptyField { id: 3, field: "src" })));
        assert!(matches!(read_triplets(&dir.path().join("nope.jsonl")), Err(CorpusError::MissingFile(_))));
    }

    #[test]
    fn split_is_deterministic_and_exact() {
        let ts: Vec<Triplet> = (0..1000).map(|i| tri(i, &format!("s{i}"))).collect();
        let (a_train, a_test) = split_corpus(ts.clone(), 800, 200, 17).unwrap();
        let (b_train, b_test) = split_corpus(ts.clone(), 800, 200, 17).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!((a_train.len(), a_test.len()), (800, 200));
        let train_ids: HashSet<u64> = a_train.iter().map(|t| t.id).collect();
        assert!(a_test.iter().all(|t| !train_ids.contains(&t.id)));

        let (train, test) = split_corpus(ts, 900, 100, 17).unwrap();
        assert_eq!((train.len(), test.len()), (900, 100));
    }

    #[test]
    fn split_rejects_insufficient_records() {
        let ts: Vec<Triplet> = (0..5).map(|i| tri(i, "s")).collect();
        assert!(matches!(
            split_corpus(ts, 5, 1, 0),
            Err(CorpusError::InsufficientRecords { available: 5, n_train: 5, n_test: 1 })
        ));
    }

    #[test]
    fn leakage_lists_both_ids() {
        let c = Corpus::new("c", langs(), vec![tri(1, "Hello there"), tri(2, "other")], vec![tri(9, "  Hello there ")])
            .unwrap();
        let r = c.validate_no_leakage();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].test_id, 9);
        assert_eq!(r.violations[0].train_ids, vec![1]);

        let clean = Corpus::new("c", langs(), vec![tri(1, "a")], vec![tri(2, "b")]).unwrap();
        assert!(clean.validate_no_leakage().is_clean());
    }

    #[test]
    fn leakage_uses_nfc() {
        // precomposed é vs e + combining acute
        let c = Corpus::new("c", langs(), vec![tri(1, "caf\u{e9}")], vec![tri(2, "cafe\u{301}")]).unwrap();
        assert_eq!(c.validate_no_leakage().violations.len(), 1);
    }

    #[test]
    fn corpus_rejects_ids_shared_across_splits() {
        assert!(matches!(
            Corpus::new("c", langs(), vec![tri(1, "a")], vec![tri(1, "b")]),
            Err(CorpusError::DuplicateId(1))
        ));
    }

    #[test]
    fn descriptor_single_file_split() {
        let dir = tempfile::tempdir().unwrap();
        let lines: Vec<String> = (0..1000).map(|i| tri(i, &format!("sentence {i}")).to_line()).collect();
        write_lines(dir.path(), "all.jsonl", &lines);
        let d: CorpusDescriptor = toml::from_str(
            r#"
            name = "gom"
            source_lang = "eng"
            pivot_lang = "mar"
            target_lang = "gom"
            file = "all.jsonl"
            n_train = 800
            n_test = 200
            seed = 17
            "#,
        )
        .unwrap();
        let c = load_corpus(&d, dir.path()).unwrap();
        assert_eq!((c.train().len(), c.test().len()), (800, 200));
    }

    #[test]
    fn descriptor_needs_a_layout() {
        let d = CorpusDescriptor {
            name: "x".into(),
            source_lang: "eng".into(),
            pivot_lang: None,
            target_lang: "aeb".into(),
            train: Some("a".into()),
            test: None,
            file: None,
            n_train: None,
            n_test: None,
            seed: None,
        };
        assert!(matches!(load_corpus(&d, Path::new(".")), Err(CorpusError::Descriptor(_))));
    }

    #[test]
    fn load_rejects_leaking_splits() {
        let dir = tempfile::tempdir().unwrap();
        write_lines(dir.path(), "train.jsonl", &[tri(0, "same").to_line()]);
        write_lines(dir.path(), "test.jsonl", &[tri(1, "same").to_line()]);
        let d = CorpusDescriptor {
            name: "x".into(),
            source_lang: "eng".into(),
            pivot_lang: Some("mar".into()),
            target_lang: "gom".into(),
            train: Some("train.jsonl".into()),
            test: Some("test.jsonl".into()),
            file: None,
            n_train: None,
            n_test: None,
            seed: None,
        };
        assert!(matches!(load_corpus(&d, dir.path()), Err(CorpusError::Leakage(_))));
    }

    #[test]
    fn vocabulary_policies() {
        let v = extract_vocabulary("x", ["a b", "b c"], NormalizationPolicy::RawWs);
        assert_eq!(v.words.iter().map(String::as_str).collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert!(extract_vocabulary("x", Vec::<String>::new(), NormalizationPolicy::Folded).is_empty());
        let v = extract_vocabulary("x", ["Hello, hello!"], NormalizationPolicy::Folded);
        assert_eq!(v.words.iter().map(String::as_str).collect::<Vec<_>>(), vec!["hello"]);
        // raw-ws keeps punctuation and case
        let v = extract_vocabulary("x", ["Hello, hello!"], NormalizationPolicy::RawWs);
        assert_eq!(v.len(), 2);
        // pure punctuation disappears under folding
        let v = extract_vocabulary("x", ["-- ... «»"], NormalizationPolicy::Folded);
        assert!(v.is_empty());
        // Devanagari danda is punctuation
        let v = extract_vocabulary("x", ["नमस्कार।"], NormalizationPolicy::Folded);
        assert!(v.words.contains("नमस्कार"));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [NormalizationPolicy::RawWs, NormalizationPolicy::Folded] {
            assert_eq!(p.as_str().parse::<NormalizationPolicy>().unwrap(), p);
        }
        assert!("lower".parse::<NormalizationPolicy>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn text() -> impl Strategy<Value = String> {
            proptest::string::string_regex("[a-zA-Zé.,!?«» \\-\u{0900}-\u{0930}\u{0627}-\u{063a}\"\\\\\n\t]{1,30}").unwrap()
        }

        fn policy() -> impl Strategy<Value = NormalizationPolicy> {
            prop_oneof![Just(NormalizationPolicy::RawWs), Just(NormalizationPolicy::Folded)]
        }

        proptest! {
            #[test]
            fn vocabulary_is_idempotent(texts in prop::collection::vec(text(), 0..8), p in policy()) {
                let v = extract_vocabulary("x", &texts, p);
                let again = extract_vocabulary("x", &v.words, p);
                prop_assert_eq!(&v.words, &again.words);
                prop_assert!(v.words.iter().all(|w| !w.is_empty() && !w.chars().any(char::is_whitespace)));
            }

            #[test]
            fn vocabulary_ignores_order_and_duplicates(texts in prop::collection::vec(text(), 0..8), p in policy()) {
                let v = extract_vocabulary("x", &texts, p);
                let mut shuffled: Vec<String> = texts.iter().rev().cloned().collect();
                shuffled.extend(texts.iter().cloned());
                prop_assert_eq!(v.words, extract_vocabulary("x", &shuffled, p).words);
            }

            #[test]
            fn canonical_lines_round_trip(
                rows in prop::collection::vec((text(), proptest::option::of(text()), text()), 1..10)
            ) {
                let ts: Vec<Triplet> = rows
                    .into_iter()
                    .enumerate()
                    .filter(|(_, (s, p, t))| !s.trim().is_empty() && !t.trim().is_empty()
                        && p.as_ref().is_none_or(|p| !p.trim().is_empty()))
                    .map(|(i, (s, p, t))| Triplet::new(i as u64, s, p, t))
                    .collect();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("c.jsonl");
                write_triplets(&path, &ts).unwrap();
                let first = fs::read(&path).unwrap();
                let back = read_triplets(&path).unwrap();
                prop_assert_eq!(&back, &ts);
                write_triplets(&path, &back).unwrap();
                prop_assert_eq!(first, fs::read(&path).unwrap());
            }

            #[test]
            fn split_is_pure(n in 2usize..60, seed in any::<u64>()) {
                let ts: Vec<Triplet> = (0..n as u64).map(|i| tri(i, "s")).collect();
                let n_train = n / 2;
                let n_test = n - n_train - 1;
                let a = split_corpus(ts.clone(), n_train, n_test, seed).unwrap();
                let b = split_corpus(ts, n_train, n_test, seed).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
