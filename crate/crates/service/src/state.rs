use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use sampling_core::domain::Timestamp;
use sampling_core::ingestion::{parse_worksheet, IngestReport, WorksheetFormat};
use sampling_core::sequencer::DistanceModel;
use sampling_core::store::{ingest_records, Store};

use crate::error::ApiError;

/// Shared handle to the store. Readers hold the read lock for the whole
/// response, so a response never mixes two versions of the state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Shared>,
}

struct Shared {
    store: RwLock<Store>,
    model: DistanceModel,
    watcher_alive: AtomicBool,
    last_sync: Mutex<Option<Timestamp>>,
}

impl AppState {
    pub fn new(store: Store, model: DistanceModel) -> Self {
        Self {
            inner: Arc::new(Shared {
                store: RwLock::new(store),
                model,
                watcher_alive: AtomicBool::new(true),
                last_sync: Mutex::new(None),
            }),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Store> {
        self.inner.store.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Store> {
        self.inner.store.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn model(&self) -> &DistanceModel {
        &self.inner.model
    }

    pub fn watcher_alive(&self) -> bool {
        self.inner.watcher_alive.load(Ordering::SeqCst)
    }

    pub(crate) fn set_watcher_alive(&self, alive: bool) {
        self.inner.watcher_alive.store(alive, Ordering::SeqCst);
    }

    pub fn last_sync(&self) -> Option<Timestamp> {
        *self.inner.last_sync.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Parses outside the lock, then validates, applies and persists under it.
    pub fn ingest(&self, bytes: &[u8], format: WorksheetFormat) -> Result<IngestReport, ApiError> {
        let records = parse_worksheet(bytes, format)?;
        let now = Timestamp::now();
        let report = {
            let mut store = self.write();
            let report = ingest_records(store.engine_mut(), &records, now);
            store.persist()?;
            report
        };
        *self.inner.last_sync.lock().unwrap_or_else(|e| e.into_inner()) = Some(now);
        Ok(report)
    }
}
