//! Persistent store of constraint records.
//!
//! Each record lives in its own file named after the digest of its
//! canonical encoding. An in-memory index serves readers; writers take the
//! index lock exclusively.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;

use crate::canonical::to_canonical_bytes;
use crate::digest::Digest;

use super::{ConstraintRecord, Status};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("ephemeral record {0} cannot be persisted")]
    Ephemeral(String),
    #[error("record {0} is already stored with different content")]
    Immutable(String),
    #[error("no record with id {0}")]
    UnknownRecord(String),
    #[error("store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct Entry {
    record: ConstraintRecord,
    file: Option<PathBuf>,
}

#[derive(Debug)]
pub struct IcmStore {
    dir: Option<PathBuf>,
    index: RwLock<BTreeMap<String, Entry>>,
}

impl IcmStore {
    pub fn in_memory() -> IcmStore {
        IcmStore {
            dir: None,
            index: RwLock::new(BTreeMap::new()),
        }
    }

    /// Open (creating if needed) a store directory and load its records.
    pub fn open(dir: impl AsRef<Path>) -> Result<IcmStore, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let record: ConstraintRecord = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            index.insert(
                record.id.clone(),
                Entry {
                    record,
                    file: Some(path),
                },
            );
        }
        Ok(IcmStore {
            dir: Some(dir),
            index: RwLock::new(index),
        })
    }

    fn write_file(&self, record: &ConstraintRecord) -> Result<Option<PathBuf>, StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let bytes = to_canonical_bytes(record).expect("records serialize");
        let path = dir.join(format!("{}.json", Digest::of(&bytes).to_hex()));
        if !path.exists() {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&path).map_err(|e| e.error)?;
        }
        Ok(Some(path))
    }

    /// Store a record. Storing an identical record again is a no-op.
    pub fn put(&self, record: &ConstraintRecord) -> Result<(), StoreError> {
        if record.status == Status::Ephemeral {
            return Err(StoreError::Ephemeral(record.id.clone()));
        }
        let mut index = self.index.write();
        if let Some(existing) = index.get(&record.id) {
            if &existing.record == record {
                return Ok(());
            }
            return Err(StoreError::Immutable(record.id.clone()));
        }
        let file = self.write_file(record)?;
        index.insert(
            record.id.clone(),
            Entry {
                record: record.clone(),
                file,
            },
        );
        Ok(())
    }

    /// Mark a record promoted and persist it. `fallback` supplies the
    /// record when the store does not hold it yet (an ephemeral record from
    /// the current request). Promoting twice changes nothing.
    pub fn promote(&self, id: &str, fallback: Option<&ConstraintRecord>) -> Result<ConstraintRecord, StoreError> {
        let mut index = self.index.write();
        let current = match index.get(id) {
            Some(e) => e.record.clone(),
            None => fallback
                .filter(|r| r.id == id)
                .cloned()
                .ok_or_else(|| StoreError::UnknownRecord(id.to_owned()))?,
        };
        if current.status == Status::Promoted {
            return Ok(current);
        }
        let mut promoted = current;
        promoted.status = Status::Promoted;
        promoted.reason = None;
        let file = self.write_file(&promoted)?;
        if let Some(old) = index.get(id).and_then(|e| e.file.clone()) {
            if Some(&old) != file.as_ref() {
                fs::remove_file(old)?;
            }
        }
        index.insert(
            id.to_owned(),
            Entry {
                record: promoted.clone(),
                file,
            },
        );
        Ok(promoted)
    }

    pub fn get(&self, id: &str) -> Option<ConstraintRecord> {
        self.index.read().get(id).map(|e| e.record.clone())
    }

    pub fn records(&self) -> Vec<ConstraintRecord> {
        self.index.read().values().map(|e| e.record.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.index.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records to hand to the next generation: promoted first, then
    /// admitted, each group ordered by id.
    pub fn generation_context(&self) -> Vec<ConstraintRecord> {
        let index = self.index.read();
        let pick = |s: Status| index.values().filter(move |e| e.record.status == s).map(|e| e.record.clone());
        pick(Status::Promoted).chain(pick(Status::Admitted)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Anchor, ConstraintBody};
    use crate::validators::LinearFormula;

    fn rec(text: &str, status: Status) -> ConstraintRecord {
        ConstraintRecord::new(
            ConstraintBody::Logical {
                formula: LinearFormula::parse("", text).unwrap(),
            },
            Anchor::Node("n".into()),
            vec![],
            status,
        )
        .unwrap()
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let r = rec("x <= 1", Status::Admitted);
        {
            let s = IcmStore::open(dir.path()).unwrap();
            s.put(&r).unwrap();
            s.put(&r).unwrap();
        }
        let s = IcmStore::open(dir.path()).unwrap();
        assert_eq!(s.get(&r.id).unwrap(), r);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn ephemeral_is_rejected() {
        let s = IcmStore::in_memory();
        assert!(matches!(s.put(&rec("x <= 1", Status::Ephemeral)), Err(StoreError::Ephemeral(_))));
    }

    #[test]
    fn promotion_is_idempotent_and_listed_first() {
        let dir = tempfile::tempdir().unwrap();
        let s = IcmStore::open(dir.path()).unwrap();
        let admitted = rec("y <= 1", Status::Admitted);
        s.put(&admitted).unwrap();
        let eph = rec("x <= 1", Status::Ephemeral);
        let p1 = s.promote(&eph.id, Some(&eph)).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        let p2 = s.promote(&eph.id, None).unwrap();
        let files2: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(p1, p2);
        assert_eq!(files.len(), files2.len());
        let ctx = s.generation_context();
        assert_eq!(ctx[0].id, eph.id);
        assert_eq!(ctx[1].id, admitted.id);
        assert!(matches!(s.promote("nope", None), Err(StoreError::UnknownRecord(_))));
    }
}
