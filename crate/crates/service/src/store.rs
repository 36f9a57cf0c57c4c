//! File-backed store. Every artifact is a standalone file under one root:
//!
//! ```text
//! <root>/datasets/<id>.json   dataset (schema, cases, threshold, provenance)
//! <root>/sessions/<id>.json   session log
//! <root>/models/<id>.json     trained model
//! <root>/reports/<id>.json    training record for model <id>
//! ```
//!
//! Writes go to a temporary file in the target directory and are renamed into
//! place, so readers only ever see complete files.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use fairlicit_core::Dataset;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dataset,
    Session,
    Model,
    Report,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Dataset, Kind::Session, Kind::Model, Kind::Report];

    pub fn dir(self) -> &'static str {
        match self {
            Kind::Dataset => "datasets",
            Kind::Session => "sessions",
            Kind::Model => "models",
            Kind::Report => "reports",
        }
    }

    /// Prefix of generated ids.
    fn prefix(self) -> &'static str {
        match self {
            Kind::Dataset => "ds",
            Kind::Session => "session",
            Kind::Model | Kind::Report => "model",
        }
    }

    fn not_found(self) -> &'static str {
        match self {
            Kind::Dataset => "UnknownDataset",
            Kind::Session => "UnknownSession",
            Kind::Model | Kind::Report => "UnknownModel",
        }
    }
}

/// Ids name files, so they are restricted to a safe alphabet.
pub fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::invalid(
            "BadId",
            format!("id {id:?} must be 1-128 characters from [A-Za-z0-9_-]"),
        ))
    }
}

fn io(e: std::io::Error) -> ApiError {
    ApiError::internal(e.to_string())
}

pub struct Store {
    root: PathBuf,
    /// Parsed datasets; a dataset file never changes once written.
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    /// One lock per session id, held across each read-modify-write.
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    /// Serializes id allocation.
    create: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let root = root.into();
        for kind in Kind::ALL {
            std::fs::create_dir_all(root.join(kind.dir())).map_err(io)?;
        }
        Ok(Store {
            root,
            datasets: RwLock::new(HashMap::new()),
            session_locks: Mutex::new(HashMap::new()),
            create: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: Kind, id: &str) -> PathBuf {
        self.root.join(kind.dir()).join(format!("{id}.json"))
    }

    pub fn exists(&self, kind: Kind, id: &str) -> bool {
        check_id(id).is_ok() && self.path(kind, id).is_file()
    }

    /// Ids of one kind, sorted.
    pub fn list(&self, kind: Kind) -> Result<Vec<String>, ApiError> {
        let mut ids: Vec<String> = std::fs::read_dir(self.root.join(kind.dir()))
            .map_err(io)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_suffix(".json")?;
                check_id(id).is_ok().then(|| id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn read(&self, kind: Kind, id: &str) -> Result<String, ApiError> {
        check_id(id)?;
        match std::fs::read_to_string(self.path(kind, id)) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found(
                kind.not_found(),
                format!("no {} with id {id:?}", &kind.dir()[..kind.dir().len() - 1]),
            )),
            Err(e) => Err(io(e)),
        }
    }

    /// Atomically replaces (or creates) the file for `id`.
    pub fn write(&self, kind: Kind, id: &str, contents: &str) -> Result<(), ApiError> {
        check_id(id)?;
        let mut tmp = tempfile::NamedTempFile::new_in(self.root.join(kind.dir())).map_err(io)?;
        tmp.write_all(contents.as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(self.path(kind, id)).map_err(|e| io(e.error))?;
        Ok(())
    }

    /// Atomically creates the file for `id`, failing if it already exists.
    pub fn create(&self, kind: Kind, id: &str, contents: &str) -> Result<(), ApiError> {
        check_id(id)?;
        let mut tmp = tempfile::NamedTempFile::new_in(self.root.join(kind.dir())).map_err(io)?;
        tmp.write_all(contents.as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        match tmp.persist_noclobber(self.path(kind, id)) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Err(ApiError::new(
                crate::error::ErrorKind::Conflict,
                "AlreadyExists",
                format!("{} {id:?} already exists", kind.dir()),
            )),
            Err(e) => Err(io(e.error)),
        }
    }

    /// Stores `contents` under the next free generated id and returns it.
    pub fn create_next(&self, kind: Kind, contents: &str) -> Result<String, ApiError> {
        self.with_next_id(kind, |id| {
            self.create(kind, id, contents)?;
            Ok(id.to_string())
        })
    }

    /// Calls `f` with the next free generated id for `kind` while holding the
    /// allocation lock, so `f` can write several files under that id.
    pub fn with_next_id<T>(
        &self,
        kind: Kind,
        f: impl FnOnce(&str) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let _guard = self.create.lock().expect("id lock");
        let mut n = self.list(kind)?.len() + 1;
        loop {
            let id = format!("{}-{n:04}", kind.prefix());
            if !self.path(kind, &id).exists() {
                return f(&id);
            }
            n += 1;
        }
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        if let Some(ds) = self.datasets.read().expect("dataset cache").get(id) {
            return Ok(ds.clone());
        }
        let text = self.read(Kind::Dataset, id)?;
        let ds = Arc::new(Dataset::from_json(&text)?);
        self.datasets
            .write()
            .expect("dataset cache")
            .insert(id.to_string(), ds.clone());
        Ok(ds)
    }

    pub fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.session_locks
            .lock()
            .expect("session lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}
