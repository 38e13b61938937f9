//! JSON-over-HTTP embedding client.
//!
//! Wire contract: `POST {url}` with `{"input": [texts]}`, answered by
//! `{"data": [{"embedding": [..]}, ..]}` in input order.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::file_store::{append_records, FileStore, StoreRecord};
use super::{EmbedError, Embedding, EmbeddingBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub url: String,
    pub batch_size: usize,
    /// Retries after the first attempt for transport errors, 429 and 5xx.
    pub max_retries: u32,
    /// Delay before the first retry; doubled on each further retry.
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Optional bearer token.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    /// Vector store file used as a persistent cache; loaded at startup and appended to.
    pub cache_path: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            batch_size: 32,
            max_retries: 4,
            initial_backoff_ms: 250,
            max_in_flight: 4,
            timeout_secs: 60,
            api_key: None,
            cache_path: None,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, Embedding>>,
    permits: Permits,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, EmbedError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut cache = HashMap::new();
        if let Some(path) = &config.cache_path {
            if path.exists() {
                let store = FileStore::load(path)?;
                log::info!("loaded {} cached embeddings from {}", store.len(), path.display());
                for r in store.records() {
                    cache.insert(r.text, Embedding(r.vector));
                }
            }
        }
        Ok(Self {
            permits: Permits::new(config.max_in_flight),
            config,
            agent,
            cache: Mutex::new(cache),
        })
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn post_with_retries(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 0;
        loop {
            match self.post_once(texts) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) if attempt >= self.config.max_retries => return Err(e),
                Err(Attempt::Retryable(e)) => {
                    log::warn!("embedding request failed ({e}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    fn post_once(&self, texts: &[String]) -> Result<Vec<Embedding>, Attempt> {
        let _permit = self.permits.acquire();
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&EmbedRequest { input: texts })
            .map_err(|e| Attempt::Retryable(EmbedError::Http(e.to_string())))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retryable(EmbedError::Http(format!("status {status}"))));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(EmbedError::Http(format!("status {status}"))));
        }
        let parsed: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(EmbedError::Http(format!("malformed response: {e}"))))?;
        if parsed.data.len() != texts.len() {
            return Err(Attempt::Fatal(EmbedError::CountMismatch {
                expected: texts.len(),
                got: parsed.data.len(),
            }));
        }
        let mut out = Vec::with_capacity(texts.len());
        for (text, datum) in texts.iter().zip(parsed.data) {
            let e = Embedding(datum.embedding);
            if !e.is_finite() {
                return Err(Attempt::Fatal(EmbedError::NonFinite(text.clone())));
            }
            out.push(e);
        }
        Ok(out)
    }
}

enum Attempt {
    Retryable(EmbedError),
    Fatal(EmbedError),
}

impl EmbeddingBackend for HttpBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .filter(|t| !cache.contains_key(*t) && seen.insert(t.as_str()))
                .cloned()
                .collect()
        };
        for chunk in missing.chunks(self.config.batch_size.max(1)) {
            let vectors = self.post_with_retries(chunk)?;
            let records: Vec<StoreRecord> = chunk
                .iter()
                .zip(&vectors)
                .map(|(t, v)| StoreRecord::new(t.clone(), v.0.clone()))
                .collect();
            let mut cache = self.cache.lock().expect("cache lock");
            if let Some(path) = &self.config.cache_path {
                append_records(path, &records)?;
            }
            for (t, v) in chunk.iter().zip(vectors) {
                cache.insert(t.clone(), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }

    fn name(&self) -> &'static str {
        "http_endpoint"
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal single-purpose HTTP server: answers each POST with the status and
    /// body produced by `handler(request_index, request_body)`.
    pub(crate) fn serve<F>(handler: F) -> (String, Arc<AtomicUsize>)
    where
        F: Fn(usize, &str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let idx = counter.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = handler(idx, std::str::from_utf8(&body).unwrap());
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                );
            }
        });
        (url, hits)
    }

    /// Embeds a text as (length, count of 'a') so results are checkable.
    fn fake_embeddings(body: &str) -> String {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        let data: Vec<serde_json::Value> = v["input"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| {
                let t = t.as_str().unwrap();
                serde_json::json!({"embedding": [t.len() as f64, t.matches('a').count() as f64 + 1.0]})
            })
            .collect();
        serde_json::json!({ "data": data }).to_string()
    }

    fn config(url: String) -> HttpConfig {
        HttpConfig {
            initial_backoff_ms: 1,
            ..HttpConfig::new(url)
        }
    }

    #[test]
    fn embeds_in_order_and_batches() {
        let (url, hits) = serve(|_, body| (200, fake_embeddings(body)));
        let backend = HttpBackend::new(HttpConfig {
            batch_size: 2,
            ..config(url)
        })
        .unwrap();
        let texts: Vec<String> = ["a", "bb", "aaa", "bb"].iter().map(|s| s.to_string()).collect();
        let out = backend.embed_batch(&texts).unwrap();
        assert_eq!(out[0].0, vec![1.0, 2.0]);
        assert_eq!(out[1].0, vec![2.0, 1.0]);
        assert_eq!(out[2].0, vec![3.0, 4.0]);
        assert_eq!(out[3], out[1]);
        // three distinct texts in batches of two
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        backend.embed_batch(&texts).unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 2, "second call served from cache");
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, hits) = serve(|i, body| {
            if i < 2 {
                (503, "{}".into())
            } else {
                (200, fake_embeddings(body))
            }
        });
        let backend = HttpBackend::new(config(url)).unwrap();
        let e = backend.embed("abc").unwrap();
        assert_eq!(e.0, vec![3.0, 2.0]);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_retry_budget_and_on_client_errors() {
        let (url, hits) = serve(|_, _| (500, "{}".into()));
        let backend = HttpBackend::new(HttpConfig {
            max_retries: 2,
            ..config(url)
        })
        .unwrap();
        assert!(matches!(backend.embed("x"), Err(EmbedError::Http(_))));
        assert_eq!(hits.load(Ordering::SeqCst), 3);

        let (url, hits) = serve(|_, _| (400, "{}".into()));
        let backend = HttpBackend::new(config(url)).unwrap();
        assert!(backend.embed("x").is_err());
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let (url, _) = serve(|_, _| (200, "{\"data\":[]}".into()));
        let backend = HttpBackend::new(config(url)).unwrap();
        assert!(matches!(
            backend.embed("x"),
            Err(EmbedError::CountMismatch { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn cache_file_persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let cache_path = dir.path().join("cache.jsonl");
        let (url, hits) = serve(|_, body| (200, fake_embeddings(body)));
        let cfg = HttpConfig {
            cache_path: Some(cache_path.clone()),
            ..config(url)
        };
        let first = HttpBackend::new(cfg.clone()).unwrap();
        let a = first.embed("banana").unwrap();
        drop(first);
        let second = HttpBackend::new(cfg).unwrap();
        assert_eq!(second.cached(), 1);
        assert_eq!(second.embed("banana").unwrap(), a);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        assert_eq!(FileStore::load(&cache_path).unwrap().len(), 1);
    }

    #[test]
    fn concurrent_callers_share_the_backend() {
        let (url, _) = serve(|_, body| (200, fake_embeddings(body)));
        let backend = Arc::new(
            HttpBackend::new(HttpConfig {
                max_in_flight: 2,
                ..config(url)
            })
            .unwrap(),
        );
        let handles: Vec<_> = (0..6)
            .map(|i| {
                let b = backend.clone();
                std::thread::spawn(move || b.embed(&"a".repeat(i + 1)).unwrap())
            })
            .collect();
        for (i, h) in handles.into_iter().enumerate() {
            assert_eq!(h.join().unwrap().0, vec![(i + 1) as f64, (i + 2) as f64]);
        }
    }
}
