use std::sync::Arc;

use alloop_core::data::{parse_csv, parse_idx, split, Dataset, PoolState, SampleId, SplitSpec};
use alloop_core::engine::{
    write_history_csv, AlSession, OracleKind, Phase, SessionConfig, SimulatedOracle,
};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::state::{AppState, MetricsRecord, QueryItem, SessionResource, SessionSlot};
use crate::store::{DatasetFormat, DatasetMeta, CSV_FILE, IMAGES_FILE, LABELS_FILE};

const UPLOAD_LIMIT: usize = 256 * 1024 * 1024;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/datasets", post(upload_dataset))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/queue", get(get_queue))
        .route("/api/sessions/{id}/labels", post(post_labels))
        .route("/api/sessions/{id}/metrics", get(get_metrics))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

/// CPU-bound engine work runs off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Serialize)]
struct DatasetCreated {
    dataset_id: String,
    len: usize,
    feature_count: usize,
    class_count: usize,
}

fn bad_upload(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "INVALID_UPLOAD", message)
}

async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    mut form: Multipart,
) -> ApiResult<Response> {
    let (mut csv, mut images, mut labels) = (None, None, None);
    let mut label_column = "label".to_owned();
    let mut class_names = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| bad_upload(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let bytes = field.bytes().await.map_err(|e| bad_upload(e.body_text()))?;
        let text = || String::from_utf8_lossy(&bytes).trim().to_owned();
        match name.as_str() {
            "file" | "csv" => csv = Some(bytes),
            "images" => images = Some(bytes),
            "labels" => labels = Some(bytes),
            "label_column" => label_column = text(),
            "class_names" => {
                class_names = Some(
                    text()
                        .split(',')
                        .map(|s| s.trim().to_owned())
                        .collect::<Vec<_>>(),
                )
            }
            other => return Err(bad_upload(format!("unexpected form field {other:?}"))),
        }
    }

    let (format, files): (DatasetFormat, Vec<(&str, Bytes)>) = match (csv, images, labels) {
        (Some(csv), None, None) => (DatasetFormat::Csv { label_column }, vec![(CSV_FILE, csv)]),
        (None, Some(img), Some(lab)) => (
            DatasetFormat::Idx,
            vec![(IMAGES_FILE, img), (LABELS_FILE, lab)],
        ),
        _ => {
            return Err(bad_upload(
                "send either a `file` CSV part or both `images` and `labels` IDX parts",
            ))
        }
    };
    let meta = DatasetMeta {
        format,
        class_names,
    };

    let created = blocking(move || {
        let ds = parse_upload(&meta, &files).map_err(|e| ApiError::from_upload(&e))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let refs: Vec<(&str, &[u8])> = files.iter().map(|(n, b)| (*n, b.as_ref())).collect();
        state
            .store
            .write_dataset(&id, &meta, &refs)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let out = DatasetCreated {
            dataset_id: id.clone(),
            len: ds.len(),
            feature_count: ds.feature_count(),
            class_count: ds.class_count(),
        };
        state.register_dataset(id, ds)?;
        Ok(out)
    })
    .await?;
    log::info!(
        "dataset {} uploaded ({} samples)",
        created.dataset_id,
        created.len
    );
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

fn parse_upload(
    meta: &DatasetMeta,
    files: &[(&str, Bytes)],
) -> Result<Dataset, alloop_core::data::DataError> {
    let ds = match &meta.format {
        DatasetFormat::Csv { label_column } => parse_csv(files[0].1.as_ref(), label_column)?,
        DatasetFormat::Idx => parse_idx(&files[0].1, &files[1].1, "images", "labels")?,
    };
    match &meta.class_names {
        Some(names) => ds.with_class_names(names.clone()),
        None => Ok(ds),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    dataset_id: String,
    #[serde(default)]
    config: SessionConfig,
    /// Without a split the whole dataset is the training cohort and no AUC is reported.
    #[serde(default)]
    split: Option<SplitSpec>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = serde_json::from_slice(&body).map_err(|e| ApiError::from_json(&e))?;
    let ds = state.dataset(&req.dataset_id)?;
    let resource = blocking(move || {
        let pool = match &req.split {
            Some(spec) => split(&ds, spec).map_err(alloop_core::engine::EngineError::from)?,
            None => PoolState {
                unlabeled: ds.ids().iter().copied().collect(),
                ..PoolState::default()
            },
        };
        let mut session = AlSession::seed(ds.clone(), pool, req.config)?;
        match session.config().oracle {
            OracleKind::Simulated => session.run_to_completion(&SimulatedOracle::new(&ds))?,
            OracleKind::Human => session.advance()?,
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = state.store.session_dir(&id);
        session.save(&dir)?;
        let slot = state.register_session(SessionSlot::new(id, req.dataset_id, dir, session))?;
        log::info!("session {} created", slot.id);
        Ok(slot.snapshot().resource.clone())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(resource)).into_response())
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionResource>> {
    Ok(Json(state.session(&id)?.snapshot().resource.clone()))
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct QueueResponse<'a> {
    session_id: &'a str,
    phase: Phase,
    pending_count: usize,
    items: &'a [QueryItem],
}

async fn get_queue(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<QueueParams>,
) -> ApiResult<Response> {
    let snap = state.session(&id)?.snapshot();
    let limit = params.limit.unwrap_or(usize::MAX).min(snap.queue.len());
    let body = QueueResponse {
        session_id: &snap.resource.session_id,
        phase: snap.resource.status.phase,
        pending_count: snap.queue.len(),
        items: &snap.queue[..limit],
    };
    Ok(Json(body).into_response())
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelItem {
    sample_id: SampleId,
    label: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LabelBatch {
    Bare(Vec<LabelItem>),
    Wrapped { labels: Vec<LabelItem> },
}

async fn post_labels(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionResource>> {
    let slot = state.session(&id)?;
    let batch: LabelBatch = serde_json::from_slice(&body).map_err(|e| ApiError::from_json(&e))?;
    let items = match batch {
        LabelBatch::Bare(v) | LabelBatch::Wrapped { labels: v } => v,
    };
    let answers: Vec<(SampleId, usize)> = items.iter().map(|i| (i.sample_id, i.label)).collect();
    let resource = blocking(move || {
        let mut session = slot.lock();
        session.submit_labels(&answers)?;
        if session.phase() == Phase::Training {
            // Readers see the retraining phase while the next round is prepared.
            slot.publish(&session);
            session.advance()?;
        }
        session.save(&slot.dir)?;
        slot.publish(&session);
        Ok(slot.snapshot().resource.clone())
    })
    .await?;
    Ok(Json(resource))
}

#[derive(Debug, Deserialize)]
struct MetricsParams {
    format: Option<String>,
}

#[derive(Debug, Serialize)]
struct MetricsResponse<'a> {
    session_id: &'a str,
    records: Vec<MetricsRecord>,
}

async fn get_metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<MetricsParams>,
) -> ApiResult<Response> {
    let snap = state.session(&id)?.snapshot();
    match params.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(MetricsResponse {
            session_id: &snap.resource.session_id,
            records: snap.history.iter().map(MetricsRecord::from).collect(),
        })
        .into_response()),
        "csv" => {
            let mut buf = Vec::new();
            write_history_csv(&snap.history, &mut buf)
                .map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
        }
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "INVALID_FORMAT",
            format!("format must be json or csv, got {other:?}"),
        )),
    }
}
