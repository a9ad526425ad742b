//! Provider failure taxonomy and the on-disk response cache shared by the
//! chat and embedding backends.
//!
//! Every remote call is keyed by a content hash of (model id, request body).
//! A warm cache therefore replays a full run without any network traffic and
//! with byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedmetrics::EmbeddingProvider;
use crate::llmroles::{ChatProvider, ChatRequest};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// The endpoint rejected our credentials. Never retried.
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned http {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("could not parse provider output: {0}")]
    Parse(String),
    #[error("cache: {0}")]
    Cache(String),
}

impl ProviderError {
    /// Transient failures worth another attempt. Auth and client errors are
    /// final; parse problems are handled at the role layer where the request
    /// can be re-phrased.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Hex content hash used as the cache key for one request.
pub fn content_key(model_id: &str, payload: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(payload.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: String,
    response: String,
}

/// One JSON file per request hash, holding the request alongside the
/// response so entries stay auditable.
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| ProviderError::Cache(e.to_string()))?;
        Ok(DiskCache { root })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let raw = fs::read_to_string(self.path_for(key)).ok()?;
        serde_json::from_str::<CacheEntry>(&raw).ok().map(|e| e.response)
    }

    pub fn put(&self, key: &str, request: &str, response: &str) -> Result<(), ProviderError> {
        let entry = CacheEntry { request: request.to_string(), response: response.to_string() };
        let body = serde_json::to_string(&entry).map_err(|e| ProviderError::Cache(e.to_string()))?;
        fs::write(self.path_for(key), body).map_err(|e| ProviderError::Cache(e.to_string()))
    }
}

/// Chat provider wrapper that consults the disk cache before delegating.
pub struct CachedChat {
    inner: Box<dyn ChatProvider>,
    cache: DiskCache,
}

impl CachedChat {
    pub fn new(inner: Box<dyn ChatProvider>, cache: DiskCache) -> Self {
        CachedChat { inner, cache }
    }
}

impl ChatProvider for CachedChat {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let payload =
            serde_json::to_string(req).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let key = content_key(self.inner.model_id(), &payload);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let reply = self.inner.complete(req)?;
        self.cache.put(&key, &payload, &reply)?;
        Ok(reply)
    }
}

/// Embedding provider wrapper caching one vector per input text, so partial
/// overlaps between requests only fetch the genuinely new texts.
pub struct CachedEmbedder {
    inner: Box<dyn EmbeddingProvider>,
    cache: DiskCache,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn EmbeddingProvider>, cache: DiskCache) -> Self {
        CachedEmbedder { inner, cache }
    }
}

impl EmbeddingProvider for CachedEmbedder {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut out: Vec<Option<Vec<f64>>> = Vec::with_capacity(texts.len());
        let mut missing: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let key = content_key(self.inner.model_id(), text);
            match self.cache.get(&key).and_then(|v| serde_json::from_str(&v).ok()) {
                Some(vector) => out.push(Some(vector)),
                None => {
                    out.push(None);
                    missing.push(i);
                }
            }
        }
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fetched = self.inner.embed(&batch)?;
            if fetched.len() != batch.len() {
                return Err(ProviderError::Parse(format!(
                    "embedding count mismatch: sent {} texts, got {} vectors",
                    batch.len(),
                    fetched.len()
                )));
            }
            for (&i, vector) in missing.iter().zip(fetched) {
                let key = content_key(self.inner.model_id(), &texts[i]);
                let encoded = serde_json::to_string(&vector)
                    .map_err(|e| ProviderError::Cache(e.to_string()))?;
                self.cache.put(&key, &texts[i], &encoded)?;
                out[i] = Some(vector);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_models_and_payloads() {
        let a = content_key("model-a", "payload");
        assert_eq!(a, content_key("model-a", "payload"));
        assert_ne!(a, content_key("model-b", "payload"));
        assert_ne!(a, content_key("model-a", "other"));
        // the separator prevents boundary ambiguity
        assert_ne!(content_key("ab", "c"), content_key("a", "bc"));
    }

    #[test]
    fn cache_round_trips_and_misses_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        assert_eq!(cache.get("deadbeef"), None);
        cache.put("deadbeef", "req", "res").unwrap();
        assert_eq!(cache.get("deadbeef").as_deref(), Some("res"));
    }
}
