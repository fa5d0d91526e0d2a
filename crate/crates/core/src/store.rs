//! On-disk data directory shared by the CLI and the service.
//!
//! ```text
//! <dir>/registry.json   zones, points and methods
//! <dir>/kb.txt          knowledge base (optional; bundled ontology otherwise)
//! <dir>/audit.log       append-only audit trail, the recovery source of truth
//! <dir>/snapshot.json   last persisted state, checked against the replayed log
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Registry, TaskId, Timestamp};
use crate::ingestion::{validate_records, IngestReport, ValidationContext, WorksheetRecord};
use crate::ontology::{application_ontology, load_kb, populate_from_registry, save_kb, KnowledgeBase};
use crate::workflow::{
    read_audit_log, Actor, AuditLogWriter, EngineState, RaciMatrix, WorkflowEngine,
};

pub const REGISTRY_FILE: &str = "registry.json";
pub const KB_FILE: &str = "kb.txt";
pub const AUDIT_FILE: &str = "audit.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Actor recorded on ingestion events.
pub fn system_actor() -> Actor {
    Actor::new("lims-import", "System")
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("data corruption in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    /// True for errors that mean persisted data cannot be trusted.
    pub fn is_corruption(&self) -> bool {
        matches!(self, StoreError::Corrupt { .. })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    last_seq: u64,
    state: EngineState,
}

pub struct Store {
    dir: PathBuf,
    kb: KnowledgeBase,
    engine: WorkflowEngine,
    log: AuditLogWriter,
    persisted: usize,
}

impl Store {
    /// Creates `dir` with the given registry if it has none yet.
    pub fn init(dir: &Path, registry: &Registry) -> Result<(), StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let path = dir.join(REGISTRY_FILE);
        if !path.exists() {
            write_atomic(&path, registry.to_json().as_bytes())?;
        }
        Ok(())
    }

    /// Loads the directory and replays the audit log. A log that does not
    /// replay, or disagrees with the snapshot, is reported as corruption.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let registry_path = dir.join(REGISTRY_FILE);
        let bytes = std::fs::read(&registry_path).map_err(|e| StoreError::Config {
            path: registry_path.clone(),
            message: e.to_string(),
        })?;
        let registry = Arc::new(Registry::from_json(&bytes).map_err(|e| StoreError::Corrupt {
            path: registry_path.clone(),
            message: e.to_string(),
        })?);

        let kb_path = dir.join(KB_FILE);
        let corrupt_kb = |message: String| StoreError::Corrupt {
            path: kb_path.clone(),
            message,
        };
        let mut kb = if kb_path.exists() {
            load_kb(&kb_path).map_err(|e| corrupt_kb(e.to_string()))?
        } else {
            application_ontology()
        };
        populate_from_registry(&mut kb, &registry).map_err(|e| corrupt_kb(e.to_string()))?;
        let raci = RaciMatrix::from_kb(&kb).map_err(|e| corrupt_kb(e.to_string()))?;

        let audit_path = dir.join(AUDIT_FILE);
        let corrupt_log = |message: String| StoreError::Corrupt {
            path: audit_path.clone(),
            message,
        };
        let events = read_audit_log(&audit_path).map_err(|e| corrupt_log(e.to_string()))?;
        let engine = WorkflowEngine::from_events(registry, raci, events)
            .map_err(|e| corrupt_log(e.to_string()))?;
        check_snapshot(&dir.join(SNAPSHOT_FILE), &engine)?;

        let log = AuditLogWriter::open(&audit_path).map_err(|e| StoreError::Config {
            path: audit_path.clone(),
            message: e.to_string(),
        })?;
        let persisted = engine.events().len();
        Ok(Self {
            dir: dir.to_owned(),
            kb,
            engine,
            log,
            persisted,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn registry(&self) -> &Arc<Registry> {
        self.engine.registry()
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn engine(&self) -> &WorkflowEngine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut WorkflowEngine {
        &mut self.engine
    }

    /// Appends unsaved events to the audit log and rewrites the snapshot.
    pub fn persist(&mut self) -> Result<(), StoreError> {
        let fresh = &self.engine.events()[self.persisted..];
        if fresh.is_empty() {
            return Ok(());
        }
        self.log.append(fresh).map_err(|e| StoreError::Config {
            path: self.dir.join(AUDIT_FILE),
            message: e.to_string(),
        })?;
        self.persisted = self.engine.events().len();
        let snapshot = Snapshot {
            last_seq: self.engine.events().last().map_or(0, |e| e.seq),
            state: self.engine.state().clone(),
        };
        let json = serde_json::to_vec(&snapshot).expect("snapshot serializes");
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &json)
    }

    /// Replaces the knowledge base. The RACI matrix is re-derived from it, so
    /// the new base must still carry a valid one.
    pub fn replace_kb(&mut self, mut kb: KnowledgeBase) -> Result<(), StoreError> {
        let path = self.dir.join(KB_FILE);
        let invalid = |message: String| StoreError::Config {
            path: path.clone(),
            message,
        };
        populate_from_registry(&mut kb, self.registry()).map_err(|e| invalid(e.to_string()))?;
        let raci = RaciMatrix::from_kb(&kb).map_err(|e| invalid(e.to_string()))?;
        let engine = WorkflowEngine::from_events(
            self.registry().clone(),
            raci,
            self.engine.events().to_vec(),
        )
        .map_err(|e| invalid(e.to_string()))?;
        save_kb(&kb, &path).map_err(|e| invalid(e.to_string()))?;
        self.kb = kb;
        self.engine = engine;
        Ok(())
    }
}

fn check_snapshot(path: &Path, engine: &WorkflowEngine) -> Result<(), StoreError> {
    let corrupt = |message: String| StoreError::Corrupt {
        path: path.to_owned(),
        message,
    };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(corrupt(e.to_string())),
    };
    let snapshot: Snapshot = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let last_seq = engine.events().last().map_or(0, |e| e.seq);
    if snapshot.last_seq > last_seq {
        return Err(corrupt(format!(
            "snapshot is at event {} but the audit log ends at {last_seq}",
            snapshot.last_seq
        )));
    }
    // A snapshot behind the log means a crash between the two writes; the log wins.
    if snapshot.last_seq == last_seq
        && snapshot.state.canonical_json() != engine.state().canonical_json()
    {
        return Err(corrupt(
            "replayed audit log does not reproduce the snapshot".to_owned(),
        ));
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_owned(),
        source,
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Validates parsed records against the engine's registry and current tasks,
/// then adds the accepted tasks as system events.
pub fn ingest_records(
    engine: &mut WorkflowEngine,
    records: &[WorksheetRecord],
    timestamp: Timestamp,
) -> IngestReport {
    let existing: HashSet<TaskId> = engine.task_ids().cloned().collect();
    let registry = engine.registry().clone();
    let mut ctx = ValidationContext::new(&registry);
    ctx.existing = Some(&existing);
    let (tasks, report) = validate_records(records, &ctx);
    engine
        .add_tasks(tasks, &system_actor(), timestamp)
        .expect("validated tasks are new and fresh");
    report
}
