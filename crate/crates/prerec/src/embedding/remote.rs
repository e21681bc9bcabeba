//! Client for an external text-encoder service.
//!
//! Protocol: `POST <path>` with JSON `{"texts": [...]}`, response JSON
//! `{"vectors": [[...], ...]}`. Vectors are cached on disk keyed by the
//! SHA-256 of the text, so repeated corpora never re-encode. Only plain
//! `http://` endpoints are supported; the encoder is expected to run nearby.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderClientConfig {
    /// `http://host:port/path`
    pub endpoint: String,
    pub max_batch: usize,
    pub max_retries: u32,
    /// Initial backoff; doubles per retry.
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl Default for EncoderClientConfig {
    fn default() -> Self {
        EncoderClientConfig {
            endpoint: "http://127.0.0.1:8080/encode".into(),
            max_batch: 32,
            max_retries: 3,
            backoff_ms: 100,
            cache_dir: None,
            timeout_ms: default_timeout_ms(),
        }
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f32>>,
}

pub struct EncoderClient {
    cfg: EncoderClientConfig,
    network_calls: AtomicU64,
    /// Last vector dimension seen across batches; 0 means none yet.
    seen_dim: AtomicU64,
    cache_write_lock: Mutex<()>,
}

impl EncoderClient {
    pub fn new(cfg: EncoderClientConfig) -> Self {
        EncoderClient {
            cfg,
            network_calls: AtomicU64::new(0),
            seen_dim: AtomicU64::new(0),
            cache_write_lock: Mutex::new(()),
        }
    }

    /// Number of HTTP requests issued so far (cache hits do not count).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Encodes `texts`, one vector per text, in input order.
    pub fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut out: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            match self.cache_lookup(text) {
                Some(v) => out[i] = Some(v),
                None => misses.push(i),
            }
        }
        for chunk in misses.chunks(self.cfg.max_batch.max(1)) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.post_with_retries(&batch)?;
            if vectors.len() != batch.len() {
                return Err(Error::Encoder(format!(
                    "encoder returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            for (&i, v) in chunk.iter().zip(vectors) {
                self.cache_store(&texts[i], &v)?;
                out[i] = Some(v);
            }
        }
        let result: Vec<Vec<f32>> = out.into_iter().map(|v| v.unwrap()).collect();
        let dim = result[0].len();
        if result.iter().any(|v| v.len() != dim) {
            return Err(Error::Encoder(
                "encoder returned vectors of inconsistent dimension".into(),
            ));
        }
        Ok(result)
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.cfg.cache_dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let hex = format!("{:x}", hasher.finalize());
        Some(dir.join(format!("{hex}.json")))
    }

    fn cache_lookup(&self, text: &str) -> Option<Vec<f32>> {
        let path = self.cache_path(text)?;
        let data = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&data).ok()
    }

    fn cache_store(&self, text: &str, vector: &[f32]) -> Result<()> {
        let Some(path) = self.cache_path(text) else {
            return Ok(());
        };
        let _guard = self.cache_write_lock.lock().unwrap();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string(vector).unwrap())
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    fn post_with_retries(&self, batch: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut backoff = self.cfg.backoff_ms;
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(backoff));
                backoff = backoff.saturating_mul(2);
            }
            match self.post_once(batch) {
                Ok(v) => return Ok(v),
                Err(Error::Encoder(msg)) if msg.starts_with("dimension drift") => {
                    return Err(Error::Encoder(msg));
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Encoder(format!(
            "encoder unreachable after {} attempts: {last_err}",
            self.cfg.max_retries + 1
        )))
    }

    fn post_once(&self, batch: &[String]) -> Result<Vec<Vec<f32>>> {
        let (host, path) = parse_http_endpoint(&self.cfg.endpoint)?;
        let body = serde_json::to_string(&EncodeRequest { texts: batch }).unwrap();
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let mut stream = TcpStream::connect(&host)
            .map_err(|e| Error::Encoder(format!("connect {host}: {e}")))?;
        stream
            .set_read_timeout(Some(Duration::from_millis(self.cfg.timeout_ms)))
            .ok();
        let request = format!(
            "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\n\
             Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream
            .write_all(request.as_bytes())
            .map_err(|e| Error::Encoder(format!("send: {e}")))?;
        let mut raw = Vec::new();
        stream
            .read_to_end(&mut raw)
            .map_err(|e| Error::Encoder(format!("recv: {e}")))?;
        let text = String::from_utf8_lossy(&raw);
        let (head, response_body) = text
            .split_once("\r\n\r\n")
            .ok_or_else(|| Error::Encoder("malformed HTTP response".into()))?;
        let status = head
            .lines()
            .next()
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap_or("");
        if status != "200" {
            return Err(Error::Encoder(format!("encoder returned status {status}")));
        }
        let parsed: EncodeResponse = serde_json::from_str(response_body)
            .map_err(|e| Error::Encoder(format!("bad encoder payload: {e}")))?;
        if let Some(first) = parsed.vectors.first() {
            let dim = first.len();
            if parsed.vectors.iter().any(|v| v.len() != dim) {
                return Err(Error::Encoder(
                    "dimension drift within an encoder response".into(),
                ));
            }
            if let Some(expected) = self.known_dim() {
                if dim != expected {
                    return Err(Error::Encoder(format!(
                        "dimension drift: encoder returned dim {dim}, expected {expected}"
                    )));
                }
            }
            self.remember_dim(dim);
        }
        Ok(parsed.vectors)
    }

    fn known_dim(&self) -> Option<usize> {
        let v = self.seen_dim.load(Ordering::SeqCst);
        (v != 0).then_some(v as usize)
    }

    fn remember_dim(&self, dim: usize) {
        self.seen_dim.store(dim as u64, Ordering::SeqCst);
    }
}

fn parse_http_endpoint(endpoint: &str) -> Result<(String, String)> {
    let rest = endpoint
        .strip_prefix("http://")
        .ok_or_else(|| Error::Config(format!("encoder endpoint must be http://, got {endpoint}")))?;
    let (host, path) = match rest.split_once('/') {
        Some((h, p)) => (h.to_string(), format!("/{p}")),
        None => (rest.to_string(), "/".to_string()),
    };
    if host.is_empty() {
        return Err(Error::Config("encoder endpoint has no host".into()));
    }
    Ok((host, path))
}
