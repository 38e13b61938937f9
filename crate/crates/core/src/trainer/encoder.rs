use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedError, Embedding, EmbeddingBackend};
use crate::textmetrics::tokenize;

pub const UNK: &str = "<unk>";

/// Bag-of-tokens encoder: `h = P · mean(E[t] for t in tokens)`.
///
/// `table` is `|V| × dim` and `projection` is `out_dim × dim`, both row-major.
/// Row 0 of the table is the unknown-token row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    pub dim: usize,
    pub out_dim: usize,
    pub normalize_output: bool,
    pub table: Vec<f64>,
    pub projection: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Projected vector before any output normalization.
    pub raw: Vec<f64>,
    /// Mean of the token rows.
    pub pooled: Vec<f64>,
    /// Table row per token, with repeats.
    pub rows: Vec<usize>,
    /// No known or unknown tokens at all; the UNK row stood in.
    pub empty: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint body holds {got} values, header implies {expected}")]
    Length { expected: usize, got: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    out_dim: usize,
    normalize_output: bool,
    vocab: Vec<String>,
}

impl EncoderModel {
    /// Vocabulary is every token of `texts` in sorted order after UNK. Table
    /// entries are uniform(-0.1, 0.1); the projection is the identity (on the
    /// leading square block) plus uniform(-0.01, 0.01) noise.
    pub fn new<S: AsRef<str>>(texts: &[S], dim: usize, out_dim: usize, normalize_output: bool, seed: u64) -> Self {
        assert!(dim >= 1 && out_dim >= 1, "encoder dimensions must be positive");
        let tokens: BTreeSet<String> = texts.iter().flat_map(|t| tokenize(t.as_ref()).0).collect();
        let words: Vec<String> = std::iter::once(UNK.to_string()).chain(tokens).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..words.len() * dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        let projection = (0..out_dim * dim)
            .map(|k| {
                let (r, c) = (k / dim, k % dim);
                let eye = if r == c { 1.0 } else { 0.0 };
                eye + rng.random_range(-0.01..0.01)
            })
            .collect();
        Self::from_parts(words, dim, out_dim, normalize_output, table, projection)
    }

    /// `words[0]` must be the UNK token.
    pub fn from_parts(
        words: Vec<String>,
        dim: usize,
        out_dim: usize,
        normalize_output: bool,
        table: Vec<f64>,
        projection: Vec<f64>,
    ) -> Self {
        assert_eq!(
            words.first().map(String::as_str),
            Some(UNK),
            "vocabulary must start with UNK"
        );
        assert_eq!(table.len(), words.len() * dim, "table shape");
        assert_eq!(projection.len(), out_dim * dim, "projection shape");
        let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            vocab,
            words,
            dim,
            out_dim,
            normalize_output,
            table,
            projection,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn parameter_count(&self) -> usize {
        self.table.len() + self.projection.len()
    }

    pub fn token_rows(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .0
            .iter()
            .map(|t| self.vocab.get(t).copied().unwrap_or(0))
            .collect()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.table[r * self.dim..(r + 1) * self.dim]
    }

    pub fn encode_detailed(&self, text: &str) -> Encoded {
        let mut rows = self.token_rows(text);
        let empty = rows.is_empty();
        if empty {
            rows.push(0);
        }
        let mut pooled = vec![0.0; self.dim];
        for &r in &rows {
            for (p, x) in pooled.iter_mut().zip(self.row(r)) {
                *p += x;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);
        let raw = (0..self.out_dim)
            .map(|i| {
                let prow = &self.projection[i * self.dim..(i + 1) * self.dim];
                prow.iter().zip(&pooled).map(|(a, b)| a * b).sum()
            })
            .collect();
        Encoded {
            raw,
            pooled,
            rows,
            empty,
        }
    }

    /// Projected mean embedding, L2-normalized when `normalize_output`.
    pub fn encode(&self, text: &str) -> Embedding {
        let e = self.encode_detailed(text);
        if e.empty {
            log::debug!("text {text:?} has no tokens; using the UNK row");
        }
        let mut v = e.raw;
        if self.normalize_output {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
        }
        Embedding(v)
    }

    /// Header line of JSON (dims, vocab) followed by the table and the
    /// projection as row-major little-endian f64.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), CheckpointError> {
        let header = Header {
            dim: self.dim,
            out_dim: self.out_dim,
            normalize_output: self.normalize_output,
            vocab: self.words.clone(),
        };
        serde_json::to_writer(&mut *out, &header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        out.write_all(b"\n")?;
        for x in self.table.iter().chain(&self.projection) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from(mut input: impl BufRead) -> Result<Self, CheckpointError> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| CheckpointError::Header(e.to_string()))?;
        if h.dim == 0 || h.out_dim == 0 {
            return Err(CheckpointError::Header("dimensions must be positive".into()));
        }
        if h.vocab.first().map(String::as_str) != Some(UNK) {
            return Err(CheckpointError::Header("vocabulary must start with <unk>".into()));
        }
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let n_table = h.vocab.len() * h.dim;
        let expected = n_table + h.out_dim * h.dim;
        if bytes.len() != expected * 8 {
            return Err(CheckpointError::Length {
                expected,
                got: bytes.len() / 8,
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let projection = values[n_table..].to_vec();
        let mut table = values;
        table.truncate(n_table);
        Ok(Self::from_parts(
            h.vocab,
            h.dim,
            h.out_dim,
            h.normalize_output,
            table,
            projection,
        ))
    }
}

impl EmbeddingBackend for EncoderModel {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        Ok(texts.iter().map(|t| self.encode(t)).collect())
    }

    fn name(&self) -> &'static str {
        "toy_encoder"
    }
}
