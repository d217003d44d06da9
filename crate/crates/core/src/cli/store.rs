//! Content-addressed result store.
//!
//! Each run is filed under `store/<sha256>/`, where the hash covers the
//! command, the relevant slice of the configuration and [`VERSION_TAG`]. The
//! full key is kept next to the artifacts in `key.txt`, so a hash that maps to
//! a different key is detected as a collision.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bumped whenever the numerics or the output schema change.
pub const VERSION_TAG: &str = concat!("cellhom-", env!("CARGO_PKG_VERSION"), "/schema-1");

const KEY_FILE: &str = "key.txt";
const INDEX_FILE: &str = "index.json";

/// Named output files of one run.
pub type Artifacts = Vec<(String, Vec<u8>)>;

pub struct ResultStore {
    root: PathBuf,
}

/// Canonical key text for `command` applied to `slice`.
pub fn store_key(command: &str, slice: &serde_json::Value) -> Result<String> {
    Ok(format!("{VERSION_TAG}\n{command}\n{}\n", serde_json::to_string(slice)?))
}

pub fn key_hash(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

impl ResultStore {
    /// Store rooted at `<out>/store`.
    pub fn open(out: &Path) -> Result<Self> {
        let root = out.join("store");
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Artifacts filed under `key`, if any.
    pub fn lookup(&self, key: &str) -> Result<Option<Artifacts>> {
        let hash = key_hash(key);
        let dir = self.root.join(&hash);
        let Ok(stored) = fs::read_to_string(dir.join(KEY_FILE)) else { return Ok(None) };
        if stored != key {
            return Err(Error::StoreCollision(hash));
        }
        let mut names: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != KEY_FILE)
            .collect();
        names.sort();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let bytes = fs::read(dir.join(&name))?;
            out.push((name, bytes));
        }
        Ok(Some(out))
    }

    /// Files `artifacts` under `key` and records `label` in the index.
    /// Returns the hash.
    pub fn save(&self, key: &str, label: &str, artifacts: &Artifacts) -> Result<String> {
        let hash = key_hash(key);
        let dir = self.root.join(&hash);
        if let Ok(stored) = fs::read_to_string(dir.join(KEY_FILE)) {
            if stored != key {
                return Err(Error::StoreCollision(hash));
            }
        }
        fs::create_dir_all(&dir)?;
        for (name, bytes) in artifacts {
            fs::write(dir.join(name), bytes)?;
        }
        // the key goes last: a directory without it is an incomplete entry
        fs::write(dir.join(KEY_FILE), key)?;
        let mut index = self.index()?;
        index.insert(hash.clone(), label.to_string());
        fs::write(self.root.join(INDEX_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
        Ok(hash)
    }

    /// Hash to label map.
    pub fn index(&self) -> Result<BTreeMap<String, String>> {
        match fs::read_to_string(self.root.join(INDEX_FILE)) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn save_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        let key = store_key("eval", &json!({"b": 1, "a": [0.5]})).unwrap();
        assert!(store.lookup(&key).unwrap().is_none());
        let files = vec![("eval.csv".to_string(), b"x\n".to_vec())];
        let hash = store.save(&key, "eval: 1 point", &files).unwrap();
        assert_eq!(store.lookup(&key).unwrap().unwrap(), files);
        assert_eq!(store.index().unwrap()[&hash], "eval: 1 point");
    }

    #[test]
    fn keys_are_canonical() {
        let a = store_key("cell", &json!({"x": 1, "y": 2})).unwrap();
        let b = store_key("cell", &json!({"y": 2, "x": 1})).unwrap();
        assert_eq!(a, b);
        assert_ne!(key_hash(&a), key_hash(&store_key("radial", &json!({"x": 1, "y": 2})).unwrap()));
    }

    #[test]
    fn mismatched_key_is_a_collision() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        let key = store_key("eval", &json!({})).unwrap();
        store.save(&key, "l", &vec![]).unwrap();
        fs::write(store.root().join(key_hash(&key)).join(KEY_FILE), "forged").unwrap();
        assert!(matches!(store.lookup(&key), Err(Error::StoreCollision(_))));
        assert!(matches!(store.save(&key, "l", &vec![]), Err(Error::StoreCollision(_))));
    }
}
