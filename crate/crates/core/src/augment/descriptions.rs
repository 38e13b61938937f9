//! Sentence-style descriptions of (question, answer) pairs produced by an
//! external text-generation endpoint, with a replayable JSONL cache.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::read_jsonl;

pub const MAX_DESCRIPTIONS: usize = 2;

/// The conversion prompt sent for each pair.
pub fn conversion_prompt(question: &str, answer: &str) -> String {
    format!(
        "Concatenate the question with the answer and form assertions. For example, \
Question:What kind of dog is in the photo?  Answer:golden retriever.  Assertion: The dog in the photo \
is a golden retriever. Infer for the following: Question: {question} Answer: {answer}. Please think \
of three different forms of naturally-sounded assertions for this question-answer pair with small \
disturbance but do not output them. Choose the two assertions that are closest in meaning to the \
original question-answer for output. Output shall be in .json style so that I can directly save them \
in a .txt and open by json. Do not output anything else including explanation, reasoning or \
instructions."
    )
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("unparseable reply: {0}")]
    Parse(String),
}

/// A text-generation endpoint: prompt in, raw completion text out.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GenError>;
}

/// `POST {url}` with `{"prompt": ...}`, answered by `{"text": ...}`.
pub struct HttpTextGenerator {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct GenRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenReply {
    text: String,
}

impl HttpTextGenerator {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            api_key,
            agent,
        }
    }
}

impl TextGenerator for HttpTextGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GenError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&GenRequest { prompt })
            .map_err(|e| GenError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            return Err(GenError::Status(status));
        }
        let reply: GenReply = resp
            .body_mut()
            .read_json()
            .map_err(|e| GenError::Parse(e.to_string()))?;
        Ok(reply.text)
    }
}

/// Extracts up to two descriptions from a completion. Accepts a JSON array of
/// strings, an object whose values are strings or string arrays, optionally
/// wrapped in a markdown code fence.
pub fn parse_descriptions(reply: &str) -> Result<Vec<String>, GenError> {
    let mut body = reply.trim();
    if let Some(rest) = body.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        body = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GenError::Parse(format!("{e} in {body:?}")))?;
    let mut out = Vec::new();
    let mut push = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) if !s.trim().is_empty() => out.push(s.trim().to_string()),
        serde_json::Value::Array(items) => {
            for i in items {
                if let serde_json::Value::String(s) = i {
                    if !s.trim().is_empty() {
                        out.push(s.trim().to_string());
                    }
                }
            }
        }
        _ => {}
    };
    match &value {
        serde_json::Value::Object(map) => map.values().for_each(&mut push),
        other => push(other),
    }
    out.truncate(MAX_DESCRIPTIONS);
    if out.is_empty() {
        return Err(GenError::Parse(format!("no description strings in {body:?}")));
    }
    Ok(out)
}

/// Asks for descriptions, retrying failed or unparseable replies up to
/// `max_retries` extra times.
pub fn generate_descriptions(
    generator: &dyn TextGenerator,
    question: &str,
    answer: &str,
    max_retries: u32,
) -> Result<Vec<String>, GenError> {
    let prompt = conversion_prompt(question, answer);
    let mut last = None;
    for attempt in 0..=max_retries {
        match generator.generate(&prompt).and_then(|r| parse_descriptions(&r)) {
            Ok(d) => return Ok(d),
            Err(e) => {
                log::warn!("description attempt {} for {question:?} failed: {e}", attempt + 1);
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedDescriptions {
    pub question: String,
    pub answer: String,
    pub descriptions: Vec<String>,
}

/// Generated descriptions keyed by (question, answer), persisted as JSONL.
#[derive(Debug, Default)]
pub struct DescriptionCache {
    entries: BTreeMap<(String, String), Vec<String>>,
    path: Option<PathBuf>,
}

impl DescriptionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file, loading any existing entries.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cache = Self {
            entries: BTreeMap::new(),
            path: Some(path.clone()),
        };
        if path.exists() {
            let rows: Vec<CachedDescriptions> =
                read_jsonl(&path).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            for r in rows {
                cache.entries.insert((r.question, r.answer), r.descriptions);
            }
        }
        Ok(cache)
    }

    pub fn get(&self, question: &str, answer: &str) -> Option<&[String]> {
        self.entries
            .get(&(question.to_string(), answer.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, question: &str, answer: &str, descriptions: Vec<String>) -> std::io::Result<()> {
        if let Some(path) = &self.path {
            let mut out = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
            serde_json::to_writer(
                &mut out,
                &CachedDescriptions {
                    question: question.to_string(),
                    answer: answer.to_string(),
                    descriptions: descriptions.clone(),
                },
            )?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        self.entries
            .insert((question.to_string(), answer.to_string()), descriptions);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DescribeReport {
    pub requested: usize,
    pub from_cache: usize,
    pub generated: usize,
    pub failed: usize,
}

type Slot = Mutex<Option<Result<Vec<String>, GenError>>>;

/// Fills the cache for every (question, answer) pair not already in it,
/// with at most `max_in_flight` concurrent requests. Failures are logged
/// and counted, never fatal.
pub fn describe_pairs(
    generator: &dyn TextGenerator,
    pairs: &[(String, String)],
    cache: &mut DescriptionCache,
    max_retries: u32,
    max_in_flight: usize,
) -> std::io::Result<DescribeReport> {
    let mut report = DescribeReport {
        requested: pairs.len(),
        ..Default::default()
    };
    let mut todo: Vec<&(String, String)> = Vec::new();
    for p in pairs {
        if cache.get(&p.0, &p.1).is_some() || todo.contains(&p) {
            report.from_cache += 1;
        } else {
            todo.push(p);
        }
    }
    let results: Vec<Slot> = todo.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.max(1).min(todo.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((q, a)) = todo.get(i) else { break };
                let r = generate_descriptions(generator, q, a, max_retries);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    // cache writes happen in input order so the file is reproducible
    for ((q, a), slot) in todo.iter().map(|p| (&p.0, &p.1)).zip(results) {
        match slot.into_inner().expect("result slot").expect("every slot filled") {
            Ok(d) => {
                cache.insert(q, a, d)?;
                report.generated += 1;
            }
            Err(e) => {
                log::warn!("skipping descriptions for {q:?} / {a:?}: {e}");
                report.failed += 1;
            }
        }
    }
    Ok(report)
}
