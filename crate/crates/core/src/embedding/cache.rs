use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    encoder: String,
    model: String,
    text: String,
    embedding: Vec<f64>,
}

type Key = (String, String, String);

/// Embedding cache keyed by (encoder name, model, exact text), optionally
/// persisted to an append-only JSON Lines file.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: Mutex<HashMap<Key, EmbeddingVector>>,
    file: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a persistent cache. Unparseable trailing lines from
    /// an interrupted write are skipped.
    pub fn persistent(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                let Ok(parsed) = serde_json::from_str::<CacheLine>(&line) else {
                    log::warn!("skipping malformed cache line in {}", path.display());
                    continue;
                };
                if let Ok(v) = EmbeddingVector::from_stored(parsed.embedding) {
                    entries.insert((parsed.encoder, parsed.model, parsed.text), v);
                }
            }
        }
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some(path),
        })
    }

    pub fn get(&self, encoder: &str, model: &str, text: &str) -> Option<EmbeddingVector> {
        let entries = self.entries.lock().unwrap();
        entries
            .get(&(encoder.to_string(), model.to_string(), text.to_string()))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a batch under one lock, appending new entries to the backing file.
    pub fn insert_many(
        &self,
        encoder: &str,
        model: &str,
        items: impl IntoIterator<Item = (String, EmbeddingVector)>,
    ) -> std::io::Result<()> {
        let mut entries = self.entries.lock().unwrap();
        let mut writer = match &self.file {
            Some(path) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?)),
            None => None,
        };
        for (text, vector) in items {
            let key = (encoder.to_string(), model.to_string(), text);
            if entries.contains_key(&key) {
                continue;
            }
            if let Some(w) = writer.as_mut() {
                let line = CacheLine {
                    encoder: key.0.clone(),
                    model: key.1.clone(),
                    text: key.2.clone(),
                    embedding: vector.values().to_vec(),
                };
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
            entries.insert(key, vector);
        }
        if let Some(mut w) = writer {
            w.flush()?;
        }
        Ok(())
    }
}
