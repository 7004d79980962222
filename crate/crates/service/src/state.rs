use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};

use alloop_core::data::{Dataset, SampleId};
use alloop_core::engine::{AlSession, SessionStatus};
use alloop_core::metrics::RoundRecord;
use base64::Engine as _;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};
use crate::store::{Index, Store};

/// Status projection returned by every session endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResource {
    pub session_id: String,
    pub dataset_id: String,
    #[serde(flatten)]
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    /// Raw pixel bytes, base64 encoded, row-major `rows × cols`.
    Image {
        rows: usize,
        cols: usize,
        data: String,
    },
    Features {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryItem {
    pub sample_id: SampleId,
    pub payload: Payload,
    pub score: f64,
    pub rank: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub labeled_count: usize,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub savings_fraction: f64,
}

impl From<&RoundRecord> for MetricsRecord {
    fn from(r: &RoundRecord) -> Self {
        Self {
            round: r.round,
            labeled_count: r.labeled_count,
            val_auc: r.val_auc,
            test_auc: r.test_auc,
            savings_fraction: r.savings,
        }
    }
}

/// Everything a reader may ask for, computed once per write.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub resource: SessionResource,
    pub queue: Vec<QueryItem>,
    pub history: Vec<RoundRecord>,
}

impl Snapshot {
    pub fn of(session_id: &str, dataset_id: &str, session: &AlSession) -> Self {
        let ds = session.dataset();
        let class_names: Vec<String> = match ds.class_names() {
            Some(names) => names.to_vec(),
            None => (0..ds.class_count()).map(|c| c.to_string()).collect(),
        };
        let mut queue: Vec<QueryItem> = Vec::with_capacity(session.pending_queries().len());
        if let Some(report) = session.report() {
            let ranks = report.ranks();
            for &id in session.pending_queries() {
                queue.push(QueryItem {
                    sample_id: id,
                    payload: payload(ds, id),
                    score: report.score(id).unwrap_or(f64::NAN),
                    rank: ranks.get(&id).copied().unwrap_or(usize::MAX),
                    class_count: ds.class_count(),
                    class_names: class_names.clone(),
                });
            }
        }
        queue.sort_by_key(|q| (q.rank, q.sample_id));
        Self {
            resource: SessionResource {
                session_id: session_id.to_owned(),
                dataset_id: dataset_id.to_owned(),
                status: session.status(),
            },
            queue,
            history: session.history().to_vec(),
        }
    }
}

fn payload(ds: &Dataset, id: SampleId) -> Payload {
    match (ds.payload_of(id), ds.payload_dims()) {
        (Some(bytes), Some((rows, cols))) => Payload::Image {
            rows,
            cols,
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        },
        _ => Payload::Features {
            values: ds.row_of(id).map(<[f64]>::to_vec).unwrap_or_default(),
        },
    }
}

/// A live session: one writer at a time, readers see the last published snapshot.
pub struct SessionSlot {
    pub id: String,
    pub dataset_id: String,
    pub dir: PathBuf,
    writer: Mutex<AlSession>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl SessionSlot {
    pub fn new(id: String, dataset_id: String, dir: PathBuf, session: AlSession) -> Self {
        let snap = Snapshot::of(&id, &dataset_id, &session);
        Self {
            id,
            dataset_id,
            dir,
            writer: Mutex::new(session),
            snapshot: RwLock::new(Arc::new(snap)),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }

    pub fn lock(&self) -> MutexGuard<'_, AlSession> {
        self.writer.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn publish(&self, session: &AlSession) {
        let snap = Arc::new(Snapshot::of(&self.id, &self.dataset_id, session));
        *self
            .snapshot
            .write()
            .unwrap_or_else(PoisonError::into_inner) = snap;
    }
}

/// Shared state behind the router.
pub struct AppState {
    pub store: Store,
    index: Mutex<Index>,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
}

impl AppState {
    /// Opens (or creates) a data directory and reloads every indexed dataset and session.
    pub fn open(data_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let store = Store::new(data_dir)?;
        let index = store.read_index()?;
        let mut datasets = HashMap::new();
        for id in &index.datasets {
            match store.load_dataset(id) {
                Ok(ds) => {
                    datasets.insert(id.clone(), Arc::new(ds));
                }
                Err(e) => log::warn!("skipping dataset {id}: {e}"),
            }
        }
        let mut sessions = HashMap::new();
        for (id, entry) in &index.sessions {
            let Some(ds) = datasets.get(&entry.dataset_id) else {
                log::warn!(
                    "skipping session {id}: dataset {} is missing",
                    entry.dataset_id
                );
                continue;
            };
            let dir = store.session_dir(id);
            match AlSession::load(&dir, ds.clone()) {
                Ok(s) => {
                    let slot = SessionSlot::new(id.clone(), entry.dataset_id.clone(), dir, s);
                    sessions.insert(id.clone(), Arc::new(slot));
                }
                Err(e) => log::warn!("skipping session {id}: {e}"),
            }
        }
        log::info!(
            "opened {} with {} datasets and {} sessions",
            store.root().display(),
            datasets.len(),
            sessions.len()
        );
        Ok(Self {
            store,
            index: Mutex::new(index),
            datasets: RwLock::new(datasets),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dataset(&self, id: &str) -> ApiResult<Arc<Dataset>> {
        self.datasets
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<SessionSlot>> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Records a dataset in the index after its files are on disk.
    pub fn register_dataset(&self, id: String, ds: Dataset) -> ApiResult<()> {
        let mut index = self.index.lock().unwrap_or_else(PoisonError::into_inner);
        index.datasets.insert(id.clone());
        self.store
            .write_index(&index)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.datasets
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(id, Arc::new(ds));
        Ok(())
    }

    /// Records a session in the index after its directory is on disk.
    pub fn register_session(&self, slot: SessionSlot) -> ApiResult<Arc<SessionSlot>> {
        let mut index = self.index.lock().unwrap_or_else(PoisonError::into_inner);
        index.sessions.insert(
            slot.id.clone(),
            crate::store::SessionEntry {
                dataset_id: slot.dataset_id.clone(),
            },
        );
        self.store
            .write_index(&index)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let slot = Arc::new(slot);
        self.sessions
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(slot.id.clone(), slot.clone());
        Ok(slot)
    }
}
