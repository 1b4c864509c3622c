//! Human rubric annotation: an append-only store and the HTTP API served
//! over a result log.
//!
//! Each (item, annotator) pair has one current record; every write is
//! appended to the store file, so earlier versions stay on disk. Writers
//! may pass the version they last saw and get `409 Conflict` if someone
//! else wrote in between. The result log itself is never modified.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::metrics::{b_measure, flesch_reading_ease, human_aggregate, std_dev, Annotation};
use crate::runner::{latest_records, LogRecord};

/// One stored rubric judgement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub annotator_id: String,
    /// Contextual accuracy, internal consistency, clarity of structure.
    pub criteria: [u8; 3],
    #[serde(default)]
    pub remarks: Option<String>,
    pub timestamp: String,
    /// 1 for the first write of this (item, annotator) pair.
    pub version: u64,
    #[serde(default)]
    pub nonce: Option<String>,
}

impl AnnotationRecord {
    pub fn score(&self) -> u8 {
        self.criteria.iter().sum()
    }

    pub fn as_annotation(&self) -> Annotation {
        Annotation {
            item_id: self.item_id.clone(),
            annotator_id: Some(self.annotator_id.clone()),
            criteria: self.criteria.to_vec(),
        }
    }
}

fn read_records(path: &Path) -> io::Result<Vec<AnnotationRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Current annotations (last write per item and annotator) from a store
/// file or an export.
pub fn load_annotations(path: &Path) -> io::Result<Vec<Annotation>> {
    let mut latest: BTreeMap<(String, String), AnnotationRecord> = BTreeMap::new();
    for r in read_records(path)? {
        latest.insert((r.item_id.clone(), r.annotator_id.clone()), r);
    }
    Ok(latest.values().map(AnnotationRecord::as_annotation).collect())
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("version conflict: expected {expected}, current {}", current.as_ref().map_or(0, |c| c.version))]
    Conflict {
        expected: u64,
        current: Option<Box<AnnotationRecord>>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A score submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub item_id: String,
    pub annotator_id: String,
    pub criteria: [u8; 3],
    pub remarks: Option<String>,
    /// Version the client last saw (0 for none); `None` skips the check.
    pub expected_version: Option<u64>,
    /// Repeating a nonce returns the stored record without a new write.
    pub nonce: Option<String>,
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: Option<PathBuf>,
    current: Mutex<BTreeMap<(String, String), AnnotationRecord>>,
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        AnnotationStore {
            path: None,
            current: Mutex::new(BTreeMap::new()),
        }
    }

    /// Opens (or creates) a store file and replays it.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let mut current = BTreeMap::new();
        if path.exists() {
            for r in read_records(&path)? {
                current.insert((r.item_id.clone(), r.annotator_id.clone()), r);
            }
        }
        Ok(AnnotationStore {
            path: Some(path),
            current: Mutex::new(current),
        })
    }

    pub fn get(&self, item_id: &str, annotator_id: &str) -> Option<AnnotationRecord> {
        self.current
            .lock()
            .unwrap()
            .get(&(item_id.to_string(), annotator_id.to_string()))
            .cloned()
    }

    pub fn submit(&self, s: Submission) -> Result<AnnotationRecord, StoreError> {
        let mut current = self.current.lock().unwrap();
        let key = (s.item_id.clone(), s.annotator_id.clone());
        let existing = current.get(&key);
        if let (Some(nonce), Some(prev)) = (&s.nonce, existing) {
            if prev.nonce.as_ref() == Some(nonce) {
                return Ok(prev.clone());
            }
        }
        let version = existing.map_or(0, |r| r.version);
        if let Some(expected) = s.expected_version {
            if expected != version {
                return Err(StoreError::Conflict {
                    expected,
                    current: existing.cloned().map(Box::new),
                });
            }
        }
        let record = AnnotationRecord {
            item_id: s.item_id,
            annotator_id: s.annotator_id,
            criteria: s.criteria,
            remarks: s.remarks,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            version: version + 1,
            nonce: s.nonce,
        };
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().append(true).create(true).open(path)?;
            let line = serde_json::to_string(&record).expect("record serializes") + "\n";
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        current.insert(key, record.clone());
        Ok(record)
    }

    /// Current records ordered by item then annotator.
    pub fn export(&self) -> Vec<AnnotationRecord> {
        self.current.lock().unwrap().values().cloned().collect()
    }
}

/// Deterministic round-robin: item `i` goes to `annotators[i % k]`.
pub fn assign(item_count: usize, annotators: &[String]) -> Vec<Option<String>> {
    (0..item_count)
        .map(|i| (!annotators.is_empty()).then(|| annotators[i % annotators.len()].clone()))
        .collect()
}

/// Everything the HTTP handlers share.
#[derive(Debug)]
pub struct AppState {
    items: Vec<LogRecord>,
    index: HashMap<String, usize>,
    assignment: Vec<Option<String>>,
    pub store: AnnotationStore,
    pub reveal_gold: bool,
    ui_dir: Option<PathBuf>,
}

impl AppState {
    /// Items are the latest log record per statement, sorted by id.
    pub fn new(records: &[LogRecord], store: AnnotationStore, annotators: &[String]) -> Self {
        let items = latest_records(records);
        let index = items
            .iter()
            .enumerate()
            .map(|(i, r)| (r.statement_id.clone(), i))
            .collect();
        AppState {
            assignment: assign(items.len(), annotators),
            items,
            index,
            store,
            reveal_gold: false,
            ui_dir: None,
        }
    }

    pub fn with_reveal_gold(mut self, reveal: bool) -> Self {
        self.reveal_gold = reveal;
        self
    }

    /// Serve static UI assets from `dir` at `/`.
    pub fn with_ui_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.ui_dir = dir;
        self
    }

    fn item_json(&self, i: usize, annotator: Option<&str>) -> Value {
        let r = &self.items[i];
        let mut v = json!({
            "item_id": r.statement_id,
            "position": i + 1,
            "total": self.items.len(),
            "statement": r.text,
            "reason": r.reason,
            "rephrase": r.rephrase,
            "model_label": r.final_label,
            "assigned_to": self.assignment[i],
        });
        if self.reveal_gold {
            v["gold"] = json!(r.gold);
        }
        if let Some(a) = annotator {
            v["prior"] = json!(self.store.get(&r.statement_id, a));
        }
        v
    }

    /// Live F, S, H and B overall and per (dataset, strategy).
    pub fn summary(&self) -> Value {
        let current = self.store.export();
        let mut groups: BTreeMap<(String, String), Vec<&LogRecord>> = BTreeMap::new();
        for r in &self.items {
            groups
                .entry((r.dataset.clone(), r.strategy.name().to_string()))
                .or_default()
                .push(r);
        }
        let group_json: Vec<Value> = groups
            .iter()
            .map(|((dataset, strategy), items)| {
                let mut v = summarize(items, &current);
                v["dataset"] = json!(dataset);
                v["strategy"] = json!(strategy);
                v
            })
            .collect();
        let all: Vec<&LogRecord> = self.items.iter().collect();
        let mut v = summarize(&all, &current);
        v["groups"] = json!(group_json);
        v
    }
}

fn summarize(items: &[&LogRecord], current: &[AnnotationRecord]) -> Value {
    let fre: Vec<f64> = items
        .iter()
        .filter_map(|r| r.reason.as_deref())
        .filter_map(|t| flesch_reading_ease(t).ok())
        .collect();
    let fre_mean = (!fre.is_empty()).then(|| fre.iter().sum::<f64>() / fre.len() as f64);
    let fre_std = std_dev(&fre).ok();
    let ids: std::collections::HashSet<&str> = items.iter().map(|r| r.statement_id.as_str()).collect();
    let anns: Vec<Annotation> = current
        .iter()
        .filter(|a| ids.contains(a.item_id.as_str()))
        .map(AnnotationRecord::as_annotation)
        .collect();
    let human = human_aggregate(&anns).expect("stored criteria are binary triples");
    let b = match (fre_mean, human.mean) {
        (Some(f), Some(h)) => b_measure(f, h).ok(),
        _ => None,
    };
    json!({
        "items": items.len(),
        "annotations": human.annotations,
        "items_annotated": human.per_item.len(),
        "fre_mean": fre_mean,
        "fre_std": fre_std,
        "human_mean": human.mean,
        "b_measure": b,
        "pending": human.mean.is_none(),
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize)]
struct ItemsQuery {
    #[serde(default)]
    offset: Option<usize>,
    #[serde(default)]
    limit: Option<usize>,
    #[serde(default)]
    annotator: Option<String>,
}

async fn list_items(State(s): State<Arc<AppState>>, Query(q): Query<ItemsQuery>) -> Response {
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(50).min(1000);
    let annotator = q.annotator.as_deref();
    let selected: Vec<usize> = (0..s.items.len())
        .filter(|&i| match (annotator, &s.assignment[i]) {
            (Some(a), Some(owner)) => owner == a,
            _ => true,
        })
        .collect();
    let page: Vec<Value> = selected
        .iter()
        .skip(offset)
        .take(limit)
        .map(|&i| s.item_json(i, annotator))
        .collect();
    Json(json!({ "total": selected.len(), "offset": offset, "items": page })).into_response()
}

#[derive(Debug, Deserialize)]
struct ItemQuery {
    #[serde(default)]
    annotator: Option<String>,
}

async fn get_item(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ItemQuery>,
) -> Response {
    match s.index.get(&id) {
        Some(&i) => Json(s.item_json(i, q.annotator.as_deref())).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown item `{id}`")),
    }
}

/// Parses a score body; any problem is a 422 message.
fn parse_submission(item_id: &str, body: &Value) -> Result<Submission, String> {
    let obj = body.as_object().ok_or("body must be a JSON object")?;
    let mut criteria = [0u8; 3];
    for (slot, key) in criteria.iter_mut().zip(["contextual", "consistency", "clarity"]) {
        *slot = match obj.get(key).and_then(Value::as_u64) {
            Some(v @ (0 | 1)) => v as u8,
            Some(v) => return Err(format!("`{key}` must be 0 or 1, got {v}")),
            None => return Err(format!("`{key}` must be 0 or 1")),
        };
    }
    let text = |key: &str| -> Result<Option<String>, String> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(format!("`{key}` must be a string")),
        }
    };
    let expected_version = match obj.get("version") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or("`version` must be a non-negative integer")?),
    };
    Ok(Submission {
        item_id: item_id.to_string(),
        annotator_id: text("annotator_id")?
            .filter(|a| !a.trim().is_empty())
            .unwrap_or_else(|| "anonymous".into()),
        criteria,
        remarks: text("remarks")?,
        expected_version,
        nonce: text("nonce")?,
    })
}

async fn post_score(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: String) -> Response {
    if !s.index.contains_key(&id) {
        return error(StatusCode::NOT_FOUND, format!("unknown item `{id}`"));
    }
    let value: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid JSON: {e}")),
    };
    let submission = match parse_submission(&id, &value) {
        Ok(sub) => sub,
        Err(m) => return error(StatusCode::UNPROCESSABLE_ENTITY, m),
    };
    match s.store.submit(submission) {
        Ok(record) => {
            let mut v = json!(record);
            v["score"] = json!(record.score());
            Json(v).into_response()
        }
        Err(StoreError::Conflict { expected, current }) => (
            StatusCode::CONFLICT,
            Json(json!({
                "error": format!("version conflict: you sent {expected}"),
                "current": current,
            })),
        )
            .into_response(),
        Err(StoreError::Io(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn export(State(s): State<Arc<AppState>>) -> Response {
    let mut body = String::new();
    for r in s.store.export() {
        let mut v = json!(r);
        v["score"] = json!(r.score());
        body.push_str(&v.to_string());
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn summary(State(s): State<Arc<AppState>>) -> Response {
    Json(s.summary()).into_response()
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<title>ironylab annotation</title>\n<p>The annotation UI is not installed. The API is available under <code>/api/</code>.</p>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/items", get(list_items))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/score", post(post_score))
        .route("/api/export.jsonl", get(export))
        .route("/api/export", get(export))
        .route("/api/summary", get(summary));
    let router = match &state.ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    };
    router.with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation API listening");
    axum::serve(listener, router(state)).await
}
