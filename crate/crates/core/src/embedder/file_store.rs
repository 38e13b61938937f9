use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedding, EmbeddingBackend};
use crate::model::read_jsonl;

/// One line of a vector store file: `{"text": ..., "vector": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub text: String,
    pub vector: Vec<f64>,
}

impl StoreRecord {
    pub fn new(text: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            text: text.into(),
            vector,
        }
    }
}

/// Precomputed embeddings looked up by exact formatted text.
#[derive(Debug, Clone, Default)]
pub struct FileStore {
    vectors: HashMap<String, Embedding>,
    dim: Option<usize>,
}

impl FileStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let records: Vec<StoreRecord> = read_jsonl(path).map_err(|e| EmbedError::Store(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<StoreRecord>) -> Result<Self, EmbedError> {
        let mut store = FileStore::default();
        for r in records {
            store.insert(r.text, Embedding(r.vector))?;
        }
        Ok(store)
    }

    /// Later records for the same text overwrite earlier ones.
    pub fn insert(&mut self, text: String, vector: Embedding) -> Result<(), EmbedError> {
        if !vector.is_finite() {
            return Err(EmbedError::NonFinite(text));
        }
        match self.dim {
            Some(d) if d != vector.dim() => return Err(EmbedError::DimensionMismatch(d, vector.dim())),
            None => self.dim = Some(vector.dim()),
            _ => {}
        }
        self.vectors.insert(text, vector);
        Ok(())
    }

    pub fn get(&self, text: &str) -> Option<&Embedding> {
        self.vectors.get(text)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// All entries sorted by text.
    pub fn records(&self) -> Vec<StoreRecord> {
        let mut texts: Vec<&String> = self.vectors.keys().collect();
        texts.sort();
        texts
            .into_iter()
            .map(|t| StoreRecord::new(t.clone(), self.vectors[t].0.clone()))
            .collect()
    }

    /// Writes every entry, sorted by text so output is stable.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Appends records to a store file, creating it when absent.
pub(crate) fn append_records(path: &Path, records: &[StoreRecord]) -> std::io::Result<()> {
    let mut out = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    out.get_ref().sync_data()
}

impl EmbeddingBackend for FileStore {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| EmbedError::MissingKey(t.clone()))
            })
            .collect()
    }

    fn name(&self) -> &'static str {
        "file_store"
    }
}
