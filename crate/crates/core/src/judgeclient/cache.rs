use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::GenerationParams;
use crate::promptforge::params_fingerprint;

/// Everything needed to replay a completion without the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub prompt_digest: String,
    pub params: String,
    pub text: String,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out: Option<u64>,
    #[serde(default)]
    pub tokens_estimated: bool,
}

/// SHA-256 over model, prompt digest and generation parameters.
pub fn cache_key(model: &str, prompt_digest: &str, params: &GenerationParams) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(prompt_digest.as_bytes());
    h.update([0]);
    h.update(params_fingerprint(params).as_bytes());
    hex::encode(h.finalize())
}

/// Content-addressed directory of completions, `{root}/{key[..2]}/{key}.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    /// Stores `entry` unless the key is already present; the first stored
    /// response wins. Returns the entry that is on disk afterwards.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> std::io::Result<CacheEntry> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, entry)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(entry.clone()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => {
                Ok(self.get(key).unwrap_or_else(|| entry.clone()))
            }
            Err(e) => Err(e.error),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(text: &str) -> CacheEntry {
        CacheEntry {
            model: "m".into(),
            prompt_digest: "d".into(),
            params: "p".into(),
            text: text.into(),
            latency_ms: 1.0,
            tokens_in: None,
            tokens_out: Some(3),
            tokens_estimated: true,
        }
    }

    #[test]
    fn key_depends_on_every_part() {
        let p = GenerationParams::default();
        let k = cache_key("m", "d", &p);
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("m2", "d", &p));
        assert_ne!(k, cache_key("m", "d2", &p));
        let p301 = GenerationParams {
            max_output_tokens: 301,
            ..p
        };
        assert_ne!(k, cache_key("m", "d", &p301));
        assert_eq!(k, cache_key("m", "d", &GenerationParams::default()));
    }

    #[test]
    fn first_write_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = "abcdef";
        assert!(cache.get(key).is_none());
        assert_eq!(cache.put(key, &entry("first")).unwrap().text, "first");
        assert_eq!(cache.put(key, &entry("second")).unwrap().text, "first");
        assert_eq!(cache.get(key).unwrap().text, "first");
        assert!(dir.path().join("ab").join("abcdef.json").exists());
    }
}
