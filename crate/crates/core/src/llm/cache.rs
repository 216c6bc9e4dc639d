use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::GenerationRecord;

pub const CACHE_FILE: &str = "generations.jsonl";

/// Append-only generation cache: one line-JSON file of records per run
/// directory, keyed by prompt hash. Concurrent readers, serialized writers.
#[derive(Debug)]
pub struct GenerationCache {
    path: PathBuf,
    records: RwLock<HashMap<String, GenerationRecord>>,
    writer: Mutex<File>,
}

impl GenerationCache {
    pub fn open(run_dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(run_dir)?;
        let path = run_dir.join(CACHE_FILE);
        let mut records = HashMap::new();
        if path.exists() {
            let mut bytes = fs::read(&path)?;
            // an interrupted append can leave a torn final line; drop it
            if bytes.last().is_some_and(|&b| b != b'\n') {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                log::warn!("{}: discarding incomplete final record", path.display());
                OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
                bytes.truncate(keep);
            }
            let text = String::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let r: GenerationRecord = serde_json::from_str(line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                records.entry(r.prompt_hash.clone()).or_insert(r);
            }
        }
        let writer = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, records: RwLock::new(records), writer: Mutex::new(writer) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, prompt_hash: &str) -> Option<GenerationRecord> {
        self.records.read().unwrap().get(prompt_hash).cloned()
    }

    /// Persists `record`. A hash already present is left as is: records are
    /// immutable once written.
    pub fn put(&self, record: &GenerationRecord) -> io::Result<()> {
        let mut writer = self.writer.lock().unwrap();
        if self.records.read().unwrap().contains_key(&record.prompt_hash) {
            return Ok(());
        }
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        writer.write_all(line.as_bytes())?;
        writer.flush()?;
        self.records.write().unwrap().insert(record.prompt_hash.clone(), record.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<GenerationRecord> {
        let mut v: Vec<_> = self.records.read().unwrap().values().cloned().collect();
        v.sort_by(|a, b| a.prompt_hash.cmp(&b.prompt_hash));
        v
    }
}
