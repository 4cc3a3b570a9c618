use std::collections::HashMap;
use std::convert::Infallible;
use std::panic::AssertUnwindSafe;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::stream::{self, BoxStream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use touchstone_core::config::Config;
use touchstone_core::lang::{describe_location, interpret_ripeness, ExplanationClient};
use touchstone_core::neuro::HardnessModel;
use touchstone_core::pipeline::{EventStatus, Pipeline, RunEvent, RunRecord};
use touchstone_core::scene::{color_png_bytes, generate_scene, render_with_sensor, ObjectCount, Scene};
use touchstone_core::seeding::{mix, stream as seed_stream};

use crate::store::{EventEnvelope, EventKind, SessionState, Store, StoredRun};

pub const DEFAULT_SESSION: &str = "default";
const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        tracing::error!("{e:#}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
    }
}

impl From<touchstone_core::error::Error> for ApiError {
    fn from(e: touchstone_core::error::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    state: SessionState,
    scene: Scene,
    busy: Option<String>,
}

struct Session {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<EventEnvelope>,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Shared server state. Each session serializes its own queries; different
/// sessions run independently.
pub struct Service {
    store: Store,
    config: Config,
    model: HardnessModel,
    checkpoint: String,
    client: Option<Arc<dyn ExplanationClient>>,
    seed: u64,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

fn scene_for(seed: u64, n: Option<usize>) -> touchstone_core::error::Result<Scene> {
    generate_scene(seed, n.map_or(ObjectCount::Random, ObjectCount::Exact))
}

impl Service {
    pub fn new(
        store: Store,
        config: Config,
        model: HardnessModel,
        checkpoint: impl Into<String>,
        client: Option<Arc<dyn ExplanationClient>>,
        seed: u64,
    ) -> Arc<Service> {
        Arc::new(Service {
            store,
            config,
            model,
            checkpoint: checkpoint.into(),
            client,
            seed,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Current state of a session, loading it from disk if needed.
    pub fn session_state(&self, id: &str) -> Option<SessionState> {
        self.session(id).ok().map(|s| s.lock().state.clone())
    }

    pub fn is_busy(&self, id: &str) -> bool {
        self.session(id).is_ok_and(|s| s.lock().busy.is_some())
    }

    /// Looks a session up, restoring it from its event log or creating it
    /// with the initial scene.
    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        if !Store::valid_id(id) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("invalid session id {id:?}")));
        }
        let mut map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let fresh = SessionState::new(id, &self.checkpoint, self.config.detectors.active);
        let (tx, _) = broadcast::channel(1024);
        let session = if self.store.has_session(id) {
            let state = fresh.replay(&self.store.read_events(id)?);
            let scene = scene_for(state.scene_seed, state.scene_objects)?;
            Arc::new(Session { inner: Mutex::new(Inner { state, scene, busy: None }), tx })
        } else {
            let scene = scene_for(self.seed, None)?;
            let s = Arc::new(Session { inner: Mutex::new(Inner { state: fresh, scene, busy: None }), tx });
            let mut inner = s.lock();
            self.emit(&s, &mut inner, EventKind::SceneChanged, None, json!({ "seed": self.seed, "n": null }))?;
            drop(inner);
            s
        };
        map.insert(id.to_string(), session.clone());
        Ok(session)
    }

    fn emit(
        &self,
        session: &Session,
        inner: &mut Inner,
        kind: EventKind,
        run_id: Option<&str>,
        payload: Value,
    ) -> anyhow::Result<()> {
        let ev = EventEnvelope {
            session: inner.state.session.clone(),
            seq: inner.state.last_seq + 1,
            kind,
            run_id: run_id.map(String::from),
            payload,
        };
        self.store.append_event(&ev)?;
        inner.state.apply(&ev);
        let _ = session.tx.send(ev);
        Ok(())
    }

    fn emit_logged(&self, session: &Session, kind: EventKind, run_id: &str, payload: Value) {
        let mut inner = session.lock();
        if let Err(e) = self.emit(session, &mut inner, kind, Some(run_id), payload) {
            tracing::error!("event append failed for {run_id}: {e:#}");
        }
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            intr: self.config.camera.clone(),
            sensor: self.config.depth_sensor.clone(),
            profile: self.config.detectors.active_profile().clone(),
            localize: self.config.localize.clone(),
            gel: &self.config.gel,
            model: &self.model,
            lang: &self.config.lang,
            client: self.client.as_deref(),
        }
    }

    /// Runs one query to completion on the calling (blocking) thread.
    fn execute(&self, session: &Session, run_id: &str, scene: &Scene, text: &str, seed: u64) {
        let pipeline = self.pipeline();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| {
            pipeline.run_query_with_events(scene, text, seed, &mut |ev: RunEvent| {
                let kind = match ev.status {
                    EventStatus::Started => EventKind::StageStarted,
                    EventStatus::Finished => EventKind::StageFinished,
                    EventStatus::Failed => EventKind::StageFailed,
                };
                self.emit_logged(session, kind, run_id, serde_json::to_value(&ev).unwrap_or_default());
            })
        }));
        let finished = match outcome {
            Ok(rec) => {
                self.report(session, run_id, scene, &rec);
                json!({ "success": rec.success, "objects_succeeded": rec.objects_succeeded(), "total_ms": rec.total_ms })
            }
            Err(_) => json!({ "success": false, "error": "run aborted" }),
        };
        let mut inner = session.lock();
        if let Err(e) = self.emit(session, &mut inner, EventKind::RunFinished, Some(run_id), finished) {
            tracing::error!("event append failed for {run_id}: {e:#}");
        }
        inner.busy = None;
    }

    fn report(&self, session: &Session, run_id: &str, scene: &Scene, rec: &RunRecord) {
        let rules = &self.config.lang.ripeness;
        for m in &rec.measured {
            let payload = json!({
                "found": true,
                "label": m.label,
                "class": m.class,
                "location": describe_location(m.position, &scene.workspace).phrase,
                "position_mm": m.position,
                "hardness": m.hardness,
                "ripeness": interpret_ripeness(m.class, m.hardness, rules),
            });
            self.emit_logged(session, EventKind::ObjectResult, run_id, payload);
        }
        for class in &rec.not_found {
            self.emit_logged(session, EventKind::ObjectResult, run_id, json!({ "found": false, "class": class }));
        }
        self.emit_logged(
            session,
            EventKind::Explanation,
            run_id,
            json!({ "text": rec.explanation, "degraded": rec.degraded }),
        );
        let stored = StoredRun { run_id: run_id.to_string(), session: session.lock().state.session.clone(), record: rec.clone() };
        if let Err(e) = self.store.save_run(&stored) {
            tracing::error!("could not persist {run_id}: {e:#}");
        }
    }

    fn running(&self, run_id: &str) -> Option<String> {
        let map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        map.iter().find(|(_, s)| s.lock().busy.as_deref() == Some(run_id)).map(|(k, _)| k.clone())
    }
}

pub fn router(service: Arc<Service>) -> Router {
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/scene", get(get_scene))
        .route("/scene/randomize", post(randomize))
        .route("/query", post(post_query))
        .route("/runs/{id}", get(get_run))
        .route("/events", get(events));
    Router::new().nest("/v1", v1).with_state(service)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")))
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string).filter(|k| !k.is_empty())
}

async fn health(State(svc): State<Arc<Service>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "checkpoint": svc.checkpoint,
        "detector": svc.config.detectors.active,
        "explanation_backend": if svc.client.is_some() { "external" } else { "template" },
    }))
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

fn scene_body(svc: &Service, session: &str, inner: &Inner) -> ApiResult<Value> {
    let frame = render_with_sensor(&inner.scene, &svc.config.camera, &svc.config.depth_sensor, 0)?;
    let png = color_png_bytes(&frame)?;
    Ok(json!({
        "session": session,
        "seed": inner.state.scene_seed,
        "n": inner.state.scene_objects,
        "scene": inner.scene,
        "image": {
            "width": frame.width,
            "height": frame.height,
            "png_base64": base64::engine::general_purpose::STANDARD.encode(png),
        },
    }))
}

async fn get_scene(State(svc): State<Arc<Service>>, Query(q): Query<SessionQuery>) -> ApiResult<Json<Value>> {
    let sid = q.session.unwrap_or_else(|| DEFAULT_SESSION.into());
    let session = svc.session(&sid)?;
    let inner = session.lock();
    Ok(Json(scene_body(&svc, &sid, &inner)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomizeRequest {
    seed: Option<u64>,
    n: Option<usize>,
    session: Option<String>,
}

async fn randomize(State(svc): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RandomizeRequest = parse_body(&body)?;
    let sid = req.session.unwrap_or_else(|| DEFAULT_SESSION.into());
    let session = svc.session(&sid)?;
    let key = idempotency_key(&headers);
    let mut inner = session.lock();
    if key.as_ref().is_some_and(|k| inner.state.keys.contains_key(k)) {
        return Ok(Json(scene_body(&svc, &sid, &inner)?));
    }
    if let Some(run) = &inner.busy {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("run {run} is executing")));
    }
    let seed = req.seed.unwrap_or_else(|| mix(inner.state.scene_seed, &[seed_stream::SCENE, inner.state.last_seq]));
    let scene = scene_for(seed, req.n).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    inner.scene = scene;
    let mut payload = json!({ "seed": seed, "n": req.n });
    if let Some(k) = key {
        payload["idempotency_key"] = json!(k);
    }
    svc.emit(&session, &mut inner, EventKind::SceneChanged, None, payload)?;
    Ok(Json(scene_body(&svc, &sid, &inner)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    text: String,
    session: Option<String>,
}

async fn post_query(State(svc): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "malformed JSON: empty body"));
    }
    let req: QueryRequest = parse_body(&body)?;
    let sid = req.session.unwrap_or_else(|| DEFAULT_SESSION.into());
    let session = svc.session(&sid)?;
    let key = idempotency_key(&headers);
    let (run_id, scene, seed) = {
        let mut inner = session.lock();
        if let Some(existing) = key.as_ref().and_then(|k| inner.state.keys.get(k)) {
            let body = json!({ "run_id": existing, "session": sid });
            return Ok((StatusCode::ACCEPTED, Json(body)).into_response());
        }
        if let Some(run) = &inner.busy {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("run {run} is executing")));
        }
        let n = inner.state.runs.len() as u64 + 1;
        let run_id = format!("{sid}-{n}");
        let mut payload = json!({ "text": req.text });
        if let Some(k) = &key {
            payload["idempotency_key"] = json!(k);
        }
        svc.emit(&session, &mut inner, EventKind::RunStarted, Some(&run_id), payload)?;
        inner.busy = Some(run_id.clone());
        let seed = mix(inner.state.scene_seed, &[seed_stream::PIPELINE, n]);
        (run_id, inner.scene.clone(), seed)
    };
    let (svc2, id2) = (svc.clone(), run_id.clone());
    tokio::task::spawn_blocking(move || svc2.execute(&session, &id2, &scene, &req.text, seed));
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id, "session": sid }))).into_response())
}

async fn get_run(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if let Some(run) = svc.store.load_run(&id)? {
        let mut v = serde_json::to_value(run).map_err(anyhow::Error::from)?;
        v["status"] = json!("finished");
        return Ok(Json(v));
    }
    match svc.running(&id) {
        Some(session) => Ok(Json(json!({ "run_id": id, "session": session, "status": "running" }))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown run {id}"))),
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    session: Option<String>,
    after: Option<u64>,
    follow: Option<bool>,
}

fn sse_event(ev: &EventEnvelope) -> Result<Event, Infallible> {
    Ok(Event::default()
        .id(ev.seq.to_string())
        .event(ev.kind.name())
        .data(serde_json::to_string(ev).unwrap_or_default()))
}

/// Replays the persisted log after the client's last seen sequence number,
/// then follows live events unless `follow=false`. A subscriber that falls
/// too far behind is disconnected and should reconnect with `Last-Event-ID`.
async fn events(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Response> {
    let sid = q.session.unwrap_or_else(|| DEFAULT_SESSION.into());
    let session = svc.session(&sid)?;
    let last_id = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_id.or(q.after).unwrap_or(0);
    let (backlog, rx) = {
        let _guard = session.lock();
        (svc.store.read_events(&sid)?, session.tx.subscribe())
    };
    let backlog: Vec<EventEnvelope> = backlog.into_iter().filter(|e| e.seq > after).collect();
    let last = backlog.last().map_or(after, |e| e.seq);
    let replay = stream::iter(backlog.into_iter().map(|e| sse_event(&e)));
    let body: BoxStream<'static, _> = if q.follow.unwrap_or(true) {
        let live = BroadcastStream::new(rx)
            .take_while(|r| futures::future::ready(r.is_ok()))
            .filter_map(move |r| futures::future::ready(r.ok().filter(|e| e.seq > last).map(|e| sse_event(&e))));
        replay.chain(live).boxed()
    } else {
        replay.boxed()
    };
    Ok(Sse::new(body).keep_alive(KeepAlive::default()).into_response())
}
