//! Filesystem-backed, content-addressed artifact store.
//!
//! ```text
//! <root>/STORE.json                               store manifest (hash scheme, format)
//! <root>/<namespace>/objects/<sha256>             artifact bytes
//! <root>/<namespace>/objects/<sha256>.meta.json   media type, created_at
//! <root>/<namespace>/keys/<key>/index.json        version history and latest pointer
//! <root>/<namespace>/keys/<key>/<sha256>.prov.json provenance record
//! ```
//!
//! Keys are percent-escaped outside `[A-Za-z0-9._-]`. Every index and
//! metadata write goes to a temp file first and is renamed into place.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::contracts::{to_canonical_bytes, VersionRef};
use crate::digest::{sha256_hex, HASH_ALGORITHM};
use crate::error::{Error, Result};
use crate::matrix::MATRIX_MEDIA_TYPE;

pub const JSON_MEDIA_TYPE: &str = "application/json";
const STORE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub reference: VersionRef,
    pub media_type: String,
    pub bytes: Vec<u8>,
    pub created_at: u64,
}

/// What produced an artifact. Passed to [`ArtifactStore::put`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub operation: String,
    pub params_digest: String,
    pub inputs: Vec<VersionRef>,
    pub model_version: Option<VersionRef>,
}

impl Provenance {
    pub fn root(operation: impl Into<String>) -> Self {
        Provenance {
            operation: operation.into(),
            params_digest: sha256_hex(b"{}"),
            ..Default::default()
        }
    }

    /// `params` is hashed in canonical form.
    pub fn new<P: Serialize>(operation: impl Into<String>, params: &P, inputs: Vec<VersionRef>) -> Result<Self> {
        Ok(Provenance {
            operation: operation.into(),
            params_digest: sha256_hex(&to_canonical_bytes(params)?),
            inputs,
            model_version: None,
        })
    }

    pub fn with_model(mut self, model: VersionRef) -> Self {
        self.model_version = Some(model);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub artifact: VersionRef,
    pub producer: Producer,
    pub inputs: Vec<VersionRef>,
    pub model_version: Option<VersionRef>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Producer {
    pub operation: String,
    pub params_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryEntry {
    version: String,
    created_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyIndex {
    key: String,
    latest: String,
    history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectMeta {
    media_type: String,
    created_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StoreManifest {
    pub format: u32,
    pub hash: String,
    pub matrix_media_type: String,
}

/// Counts artifact fetches per namespace. Index reads are not fetches.
#[derive(Debug, Default)]
pub struct FetchCounter {
    total: AtomicU64,
    by_namespace: Mutex<BTreeMap<String, u64>>,
}

impl FetchCounter {
    fn record(&self, namespace: &str) {
        self.total.fetch_add(1, Ordering::Relaxed);
        *self.by_namespace.lock().entry(namespace.to_string()).or_default() += 1;
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn namespace(&self, namespace: &str) -> u64 {
        self.by_namespace.lock().get(namespace).copied().unwrap_or(0)
    }
}

pub fn now_nanos() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

fn valid_namespace(ns: &str) -> bool {
    !ns.is_empty() && ns.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// Percent-escapes a key into one safe path component.
pub fn escape_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    for (i, b) in key.bytes().enumerate() {
        let safe = b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && i > 0);
        if safe {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn unescape_key(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().ok_or_else(|| Error::internal("path without parent"))?;
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.tmp-{}-{:x}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("f"),
        std::process::id(),
        now_nanos() ^ (bytes.len() as u64)
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct ArtifactStore {
    root: PathBuf,
    key_locks: Mutex<HashMap<(String, String), Arc<Mutex<()>>>>,
    fetches: FetchCounter,
}

impl std::fmt::Debug for ArtifactStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArtifactStore").field("root", &self.root).finish()
    }
}

impl ArtifactStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let manifest = StoreManifest {
            format: STORE_FORMAT,
            hash: HASH_ALGORITHM.to_string(),
            matrix_media_type: MATRIX_MEDIA_TYPE.to_string(),
        };
        let path = root.join("STORE.json");
        if path.exists() {
            let found: StoreManifest = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| Error::internal(format!("unreadable store manifest: {e}")))?;
            if found != manifest {
                return Err(Error::internal(format!(
                    "store at {} uses {}/format {}, expected {}/format {}",
                    root.display(),
                    found.hash,
                    found.format,
                    manifest.hash,
                    manifest.format
                )));
            }
        } else {
            write_atomic(&path, &to_canonical_bytes(&manifest)?)?;
        }
        Ok(ArtifactStore {
            root,
            key_locks: Mutex::new(HashMap::new()),
            fetches: FetchCounter::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fetches(&self) -> &FetchCounter {
        &self.fetches
    }

    fn ns_dir(&self, ns: &str) -> PathBuf {
        self.root.join(ns)
    }

    fn object_path(&self, ns: &str, version: &str) -> PathBuf {
        self.ns_dir(ns).join("objects").join(version)
    }

    pub fn object_file(&self, r: &VersionRef) -> PathBuf {
        self.object_path(&r.namespace, &r.version)
    }

    fn key_dir(&self, ns: &str, key: &str) -> PathBuf {
        self.ns_dir(ns).join("keys").join(escape_key(key))
    }

    fn read_index(&self, ns: &str, key: &str) -> Result<Option<KeyIndex>> {
        let path = self.key_dir(ns, key).join("index.json");
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes).map_err(|e| {
                Error::internal(format!("corrupt index {}: {e}", path.display()))
            })?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn key_lock(&self, ns: &str, key: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .entry((ns.to_string(), key.to_string()))
            .or_default()
            .clone()
    }

    /// Stores `bytes` under `(namespace, key)` and returns its content address.
    ///
    /// Re-putting bytes already in the key's history adds no history entry
    /// (it only moves `latest`). With `expected_parent`, the put fails with
    /// `VERSION_CONFLICT` unless that version is still the latest.
    pub fn put(
        &self,
        namespace: &str,
        key: &str,
        bytes: &[u8],
        media_type: &str,
        provenance: Provenance,
        expected_parent: Option<&str>,
    ) -> Result<VersionRef> {
        if !valid_namespace(namespace) {
            return Err(Error::invalid(format!("invalid namespace `{namespace}`")));
        }
        if key.is_empty() {
            return Err(Error::invalid("empty artifact key"));
        }
        for input in &provenance.inputs {
            if !self.contains(input) {
                return Err(Error::invalid(format!("provenance input {input} does not resolve")));
            }
        }
        if let Some(m) = &provenance.model_version {
            if !self.contains(m) {
                return Err(Error::invalid(format!("provenance model {m} does not resolve")));
            }
        }
        let version = sha256_hex(bytes);
        let reference = VersionRef::new(namespace, key, version.clone());
        let lock = self.key_lock(namespace, key);
        let _guard = lock.lock();

        let index = self.read_index(namespace, key)?;
        if let Some(parent) = expected_parent {
            let latest = index.as_ref().map(|i| i.latest.clone()).unwrap_or_default();
            if latest != parent {
                return Err(Error::VersionConflict {
                    key: format!("{namespace}/{key}"),
                    expected: parent.to_string(),
                    latest,
                });
            }
        }

        let created_at = now_nanos();
        let obj = self.object_path(namespace, &version);
        if !obj.exists() {
            write_atomic(&obj, bytes)?;
            let meta = ObjectMeta {
                media_type: media_type.to_string(),
                created_at,
            };
            write_atomic(&obj.with_extension("meta.json"), &to_canonical_bytes(&meta)?)?;
        }
        let prov_path = self.key_dir(namespace, key).join(format!("{version}.prov.json"));
        if !prov_path.exists() {
            let record = ProvenanceRecord {
                artifact: reference.clone(),
                producer: Producer {
                    operation: provenance.operation,
                    params_digest: provenance.params_digest,
                },
                inputs: provenance.inputs,
                model_version: provenance.model_version,
                timestamp: created_at,
            };
            write_atomic(&prov_path, &to_canonical_bytes(&record)?)?;
        }

        let mut index = index.unwrap_or(KeyIndex {
            key: key.to_string(),
            latest: String::new(),
            history: Vec::new(),
        });
        if index.latest != version {
            if !index.history.iter().any(|h| h.version == version) {
                index.history.push(HistoryEntry {
                    version: version.clone(),
                    created_at,
                });
            }
            index.latest = version;
            write_atomic(
                &self.key_dir(namespace, key).join("index.json"),
                &to_canonical_bytes(&index)?,
            )?;
        }
        Ok(reference)
    }

    pub fn contains(&self, r: &VersionRef) -> bool {
        self.key_dir(&r.namespace, &r.key)
            .join(format!("{}.prov.json", r.version))
            .exists()
    }

    /// Reads an artifact and re-verifies its hash.
    pub fn get(&self, r: &VersionRef) -> Result<Artifact> {
        if !valid_namespace(&r.namespace) || !crate::digest::is_digest_hex(&r.version) || !self.contains(r) {
            return Err(Error::not_found(format!("artifact {r}")));
        }
        self.fetches.record(&r.namespace);
        let obj = self.object_path(&r.namespace, &r.version);
        let bytes = fs::read(&obj).map_err(|_| Error::not_found(format!("artifact {r}")))?;
        if sha256_hex(&bytes) != r.version {
            return Err(Error::internal(format!("hash mismatch reading {r}")));
        }
        let meta: ObjectMeta = serde_json::from_slice(&fs::read(obj.with_extension("meta.json"))?)?;
        Ok(Artifact {
            reference: r.clone(),
            media_type: meta.media_type,
            bytes,
            created_at: meta.created_at,
        })
    }

    pub fn latest(&self, namespace: &str, key: &str) -> Result<Option<VersionRef>> {
        if !valid_namespace(namespace) {
            return Ok(None);
        }
        Ok(self
            .read_index(namespace, key)?
            .map(|i| VersionRef::new(namespace, key, i.latest)))
    }

    pub fn get_latest(&self, namespace: &str, key: &str) -> Result<Artifact> {
        let r = self
            .latest(namespace, key)?
            .ok_or_else(|| Error::not_found(format!("{namespace}/{key}")))?;
        self.get(&r)
    }

    /// Versions of a key, oldest first.
    pub fn list_versions(&self, namespace: &str, key: &str) -> Result<Vec<VersionRef>> {
        let index = self
            .read_index(namespace, key)?
            .ok_or_else(|| Error::not_found(format!("{namespace}/{key}")))?;
        Ok(index
            .history
            .into_iter()
            .map(|h| VersionRef::new(namespace, key, h.version))
            .collect())
    }

    pub fn list_keys(&self, namespace: &str) -> Result<Vec<String>> {
        let dir = self.ns_dir(namespace).join("keys");
        let mut keys = Vec::new();
        match fs::read_dir(&dir) {
            Ok(entries) => {
                for e in entries {
                    let name = e?.file_name();
                    if let Some(k) = name.to_str().and_then(unescape_key) {
                        keys.push(k);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        keys.sort();
        Ok(keys)
    }

    pub fn get_provenance(&self, r: &VersionRef) -> Result<ProvenanceRecord> {
        let path = self.key_dir(&r.namespace, &r.key).join(format!("{}.prov.json", r.version));
        let bytes = fs::read(&path).map_err(|_| Error::not_found(format!("provenance of {r}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Breadth-first walk of provenance from `r` to its roots; each record once.
    pub fn provenance_chain(&self, r: &VersionRef) -> Result<Vec<ProvenanceRecord>> {
        let mut out = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut queue = VecDeque::from([r.clone()]);
        while let Some(next) = queue.pop_front() {
            if !seen.insert(next.clone()) {
                continue;
            }
            let record = self.get_provenance(&next)?;
            queue.extend(record.inputs.iter().cloned());
            out.push(record);
        }
        Ok(out)
    }

    /// Re-hashes every stored object; returns the ones that fail.
    pub fn verify_all(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for ns in fs::read_dir(&self.root)? {
            let objects = ns?.path().join("objects");
            if !objects.is_dir() {
                continue;
            }
            for e in fs::read_dir(&objects)? {
                let path = e?.path();
                let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
                if !crate::digest::is_digest_hex(name) {
                    continue;
                }
                if sha256_hex(&fs::read(&path)?) != name {
                    bad.push(path);
                }
            }
        }
        Ok(bad)
    }
}
