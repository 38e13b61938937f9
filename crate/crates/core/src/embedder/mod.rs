//! Embedding-based scoring: `o_i = cos(f(q, r), f(q, a))`.

mod file_store;
mod http;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{PredictionEntry, PredictionSet, Sample};

pub use file_store::{FileStore, StoreRecord};
pub use http::{HttpBackend, HttpConfig};

/// A dense embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("no stored embedding for text {0:?}")]
    MissingKey(String),
    #[error("embedding for {0:?} has non-finite entries")]
    NonFinite(String),
    #[error("http backend: {0}")]
    Http(String),
    #[error("backend returned {got} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cosine similarity; errors on zero vectors or mismatched dimensions.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, EmbedError> {
    cosine_slices(u.as_slice(), v.as_slice())
}

pub fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// `Question: {question} Answer: {text}`
pub fn format_pair(question: &str, text: &str) -> String {
    format!("Question: {question} Answer: {text}")
}

/// How a (question, text) pair is turned into the string sent to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    #[default]
    QuestionAnswer,
    /// Wraps the question-answer string for decoder-derived embedding services.
    SingleWordSummary,
}

impl PromptStyle {
    pub fn render(self, question: &str, text: &str) -> String {
        let pair = format_pair(question, text);
        match self {
            PromptStyle::QuestionAnswer => pair,
            PromptStyle::SingleWordSummary => format!("Summarize the text {pair} in a single word:"),
        }
    }
}

/// A deterministic text → vector function.
///
/// Implementations must be safe to call from several threads at once.
pub trait EmbeddingBackend: Send + Sync {
    /// Embeds texts, returning one vector per input in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 })
    }

    fn name(&self) -> &'static str;
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("sample `{id}`: {source}")]
    Sample {
        id: String,
        #[source]
        source: EmbedError,
    },
    #[error("sample `{0}` has no human_score")]
    MissingHumanScore(String),
    #[error("scoring aborted after {scored} of {total} samples: {source}")]
    Aborted {
        scored: usize,
        total: usize,
        #[source]
        source: Box<ScoreError>,
    },
    #[error(transparent)]
    Invalid(#[from] crate::model::PredictionSetError),
}

/// Scores one sample: cosine between the formatted response and answer.
pub fn score_sample(backend: &dyn EmbeddingBackend, sample: &Sample, style: PromptStyle) -> Result<f64, ScoreError> {
    let wrap = |source| ScoreError::Sample {
        id: sample.id.clone(),
        source,
    };
    let texts = [
        style.render(&sample.question, &sample.response),
        style.render(&sample.question, &sample.answer),
    ];
    let vecs = backend.embed_batch(&texts).map_err(wrap)?;
    if vecs.len() != 2 {
        return Err(wrap(EmbedError::CountMismatch {
            expected: 2,
            got: vecs.len(),
        }));
    }
    cosine(&vecs[0], &vecs[1]).map_err(wrap)
}

/// Scores a whole dataset. Each distinct formatted text is embedded once.
pub fn score_dataset(
    backend: &dyn EmbeddingBackend,
    samples: &[Sample],
    style: PromptStyle,
    batch_size: usize,
) -> Result<PredictionSet, ScoreError> {
    let total = samples.len();
    let abort = |scored: usize, e: ScoreError| ScoreError::Aborted {
        scored,
        total,
        source: Box::new(e),
    };
    if let Some(s) = samples.iter().find(|s| s.human_score.is_none()) {
        return Err(abort(0, ScoreError::MissingHumanScore(s.id.clone())));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut unique: Vec<String> = Vec::new();
    let mut keys = Vec::with_capacity(samples.len());
    for s in samples {
        let mut pair = [0usize; 2];
        for (slot, text) in [&s.response, &s.answer].into_iter().enumerate() {
            let formatted = style.render(&s.question, text);
            pair[slot] = *index.entry(formatted.clone()).or_insert_with(|| {
                unique.push(formatted);
                unique.len() - 1
            });
        }
        keys.push(pair);
    }

    let mut vectors: Vec<Embedding> = Vec::with_capacity(unique.len());
    for chunk in unique.chunks(batch_size.max(1)) {
        let (start, end) = (vectors.len(), vectors.len() + chunk.len());
        // failures are attributed to the first sample needing this chunk;
        // samples whose texts were all embedded earlier count as scored
        let fail = |source: EmbedError| {
            let owner = keys
                .iter()
                .position(|k| k.iter().any(|&i| (start..end).contains(&i)))
                .unwrap_or(0);
            let scored = keys.iter().take_while(|k| k.iter().all(|&i| i < start)).count();
            abort(
                scored,
                ScoreError::Sample {
                    id: samples[owner].id.clone(),
                    source,
                },
            )
        };
        let got = backend.embed_batch(chunk).map_err(fail)?;
        if got.len() != chunk.len() {
            return Err(fail(EmbedError::CountMismatch {
                expected: chunk.len(),
                got: got.len(),
            }));
        }
        vectors.extend(got);
    }

    let mut entries = Vec::with_capacity(samples.len());
    for (i, (s, [r, a])) in samples.iter().zip(&keys).enumerate() {
        let predicted = cosine(&vectors[*r], &vectors[*a]).map_err(|source| {
            abort(
                i,
                ScoreError::Sample {
                    id: s.id.clone(),
                    source,
                },
            )
        })?;
        entries.push(PredictionEntry {
            sample_id: s.id.clone(),
            predicted,
            human: s.human_score.expect("checked above"),
            part: s.part,
            source_dataset: s.source_dataset.clone(),
            group_id: s.group_id.clone(),
        });
    }
    Ok(PredictionSet::new(entries)?)
}
