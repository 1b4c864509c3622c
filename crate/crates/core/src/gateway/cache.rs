//! Content-addressed response cache.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEntry {
    pub text: String,
    #[serde(default)]
    pub provider_meta: serde_json::Map<String, Value>,
}

/// Cache keyed by request hash: in memory, or one JSON file per key under a
/// directory (written to a temp file and renamed into place).
#[derive(Debug)]
pub enum ResponseCache {
    Disabled,
    Memory(Mutex<HashMap<String, CachedEntry>>),
    Dir(PathBuf),
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn dir(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path)?;
        Ok(ResponseCache::Dir(path))
    }

    fn file_for(dir: &Path, key: &str) -> PathBuf {
        // two-level fan-out keeps directories small
        dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CachedEntry> {
        match self {
            ResponseCache::Disabled => None,
            ResponseCache::Memory(m) => m.lock().unwrap().get(key).cloned(),
            ResponseCache::Dir(dir) => {
                let bytes = fs::read(Self::file_for(dir, key)).ok()?;
                match serde_json::from_slice(&bytes) {
                    Ok(entry) => Some(entry),
                    Err(e) => {
                        tracing::warn!(key, error = %e, "ignoring unreadable cache entry");
                        None
                    }
                }
            }
        }
    }

    pub fn put(&self, key: &str, entry: &CachedEntry) -> io::Result<()> {
        match self {
            ResponseCache::Disabled => Ok(()),
            ResponseCache::Memory(m) => {
                m.lock().unwrap().insert(key.to_string(), entry.clone());
                Ok(())
            }
            ResponseCache::Dir(dir) => {
                let target = Self::file_for(dir, key);
                let parent = target.parent().expect("cache file has a parent");
                fs::create_dir_all(parent)?;
                let tmp = parent.join(format!(
                    ".{key}.{}.{}.tmp",
                    std::process::id(),
                    TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
                ));
                fs::write(&tmp, serde_json::to_vec(entry).map_err(io::Error::other)?)?;
                fs::rename(&tmp, &target)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::dir(dir.path()).unwrap();
        assert!(cache.get("abcd").is_none());
        let e = CachedEntry {
            text: "{\"irony\": 1}".into(),
            provider_meta: Default::default(),
        };
        cache.put("abcd", &e).unwrap();
        assert_eq!(cache.get("abcd"), Some(e));
        assert!(dir.path().join("ab").join("abcd.json").exists());
    }
}
