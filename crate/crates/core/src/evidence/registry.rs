//! Content-addressed, append-only evidence store.
//!
//! Objects live under `objects/<first two hex>/<remaining hex>` and are
//! written to a temporary file first, then linked into place without
//! overwriting, so concurrent writers of the same content are harmless.
//! `manifest.jsonl` lists version-tagged bundles per artifact. Recently
//! read objects are kept in a bounded in-memory cache.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lru::LruCache;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{EvidenceBundle, VersionTag};
use crate::canonical::to_canonical_bytes;
use crate::digest::Digest;

pub const DEFAULT_CACHE_CAPACITY: usize = 256;
const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("storage failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no object at address {0}")]
    NotFound(Digest),
    #[error("object {0} does not hash to its address")]
    Corrupt(Digest),
    #[error("object {address} is not a bundle: {message}")]
    NotABundle { address: Digest, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub artifact: Digest,
    pub bundle: Digest,
    pub version: VersionTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<Digest>,
}

pub struct Registry {
    root: PathBuf,
    cache: Mutex<LruCache<Digest, Arc<[u8]>>>,
    manifest_lock: Mutex<()>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("root", &self.root).finish()
    }
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Registry, RegistryError> {
        Self::with_cache_capacity(root, DEFAULT_CACHE_CAPACITY)
    }

    pub fn with_cache_capacity(root: impl Into<PathBuf>, capacity: usize) -> Result<Registry, RegistryError> {
        let root = root.into();
        let objects = root.join("objects");
        fs::create_dir_all(&objects).map_err(io_err(&objects))?;
        let cap = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        Ok(Registry {
            root,
            cache: Mutex::new(LruCache::new(cap)),
            manifest_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, address: &Digest) -> PathBuf {
        let hex = address.to_hex();
        self.root.join("objects").join(&hex[..2]).join(&hex[2..])
    }

    /// Store `bytes` and return their address. Existing content is left
    /// untouched.
    pub fn append_bytes(&self, bytes: &[u8]) -> Result<Digest, RegistryError> {
        let address = Digest::of(bytes);
        let path = self.object_path(&address);
        if !path.exists() {
            let dir = path.parent().expect("object path has a parent");
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
            tmp.write_all(bytes).map_err(io_err(&path))?;
            tmp.as_file().sync_all().map_err(io_err(&path))?;
            match tmp.persist_noclobber(&path) {
                Ok(_) => {}
                Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => {}
                Err(e) => return Err(io_err(&path)(e.error)),
            }
        }
        self.cache.lock().put(address, Arc::from(bytes));
        Ok(address)
    }

    /// Store the canonical encoding of `entry`.
    pub fn append<T: Serialize + ?Sized>(&self, entry: &T) -> Result<Digest, RegistryError> {
        let bytes = to_canonical_bytes(entry).expect("entry serializes");
        self.append_bytes(&bytes)
    }

    pub fn contains(&self, address: &Digest) -> bool {
        self.cache.lock().contains(address) || self.object_path(address).exists()
    }

    pub fn get(&self, address: &Digest) -> Result<Arc<[u8]>, RegistryError> {
        if let Some(hit) = self.cache.lock().get(address) {
            return Ok(Arc::clone(hit));
        }
        let path = self.object_path(address);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(RegistryError::NotFound(*address)),
            Err(e) => return Err(io_err(&path)(e)),
        };
        if Digest::of(&bytes) != *address {
            return Err(RegistryError::Corrupt(*address));
        }
        let bytes: Arc<[u8]> = bytes.into();
        self.cache.lock().put(*address, Arc::clone(&bytes));
        Ok(bytes)
    }

    pub fn get_bundle(&self, address: &Digest) -> Result<EvidenceBundle, RegistryError> {
        let bytes = self.get(address)?;
        EvidenceBundle::from_slice(&bytes).map_err(|e| RegistryError::NotABundle {
            address: *address,
            message: e.to_string(),
        })
    }

    /// Drop the in-memory tier. Reads fall through to disk afterwards.
    pub fn clear_cache(&self) {
        self.cache.lock().clear();
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().len()
    }

    /// Every stored address, sorted.
    pub fn addresses(&self) -> Result<Vec<Digest>, RegistryError> {
        let objects = self.root.join("objects");
        let mut out = Vec::new();
        for fan in fs::read_dir(&objects).map_err(io_err(&objects))? {
            let fan = fan.map_err(io_err(&objects))?;
            let prefix = fan.file_name().to_string_lossy().into_owned();
            if prefix.len() != 2 || !fan.path().is_dir() {
                continue;
            }
            for obj in fs::read_dir(fan.path()).map_err(io_err(&fan.path()))? {
                let obj = obj.map_err(io_err(&fan.path()))?;
                let name = obj.file_name().to_string_lossy().into_owned();
                if let Ok(d) = format!("{prefix}{name}").parse::<Digest>() {
                    out.push(d);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Append one manifest line. Lines are written with a single call on
    /// an append-mode handle.
    pub fn record(&self, entry: &ManifestEntry) -> Result<(), RegistryError> {
        let path = self.root.join(MANIFEST);
        let mut line = serde_json::to_vec(entry).expect("entry serializes");
        line.push(b'\n');
        let _guard = self.manifest_lock.lock();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(&line).map_err(io_err(&path))
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>, RegistryError> {
        let path = self.root.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| RegistryError::Manifest {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Manifest entries from the first version up to `bundle`, following
    /// `previous` links.
    pub fn chain(&self, bundle: &Digest) -> Result<Vec<ManifestEntry>, RegistryError> {
        let manifest = self.manifest()?;
        let mut out = Vec::new();
        let mut cur = Some(*bundle);
        while let Some(addr) = cur {
            let Some(e) = manifest.iter().rev().find(|e| e.bundle == addr) else {
                break;
            };
            if out.contains(e) {
                break;
            }
            out.push(e.clone());
            cur = e.previous;
        }
        out.reverse();
        Ok(out)
    }

    /// Store artifact and sealed bundle, then record them in the manifest.
    pub fn publish(&self, artifact: &[u8], bundle: &EvidenceBundle) -> Result<ManifestEntry, RegistryError> {
        let artifact_addr = self.append_bytes(artifact)?;
        let bundle_addr = self.append_bytes(&bundle.to_canonical_bytes())?;
        let entry = ManifestEntry {
            artifact: artifact_addr,
            bundle: bundle_addr,
            version: bundle.version,
            previous: bundle.previous,
        };
        self.record(&entry)?;
        Ok(entry)
    }
}
