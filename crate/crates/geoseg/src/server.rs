//! HTTP session service for interactive segmentation.
//!
//! | route | |
//! |---|---|
//! | `POST /sessions` | upload a PNG/PNM body, 201 with the session id |
//! | `GET /sessions/:id` | stage, iteration and config |
//! | `PUT /sessions/:id/config` | replace the segmentation config |
//! | `PUT /sessions/:id/landmarks` | `{"points": [[x, y], ..]}`, returns the initial contour |
//! | `POST /sessions/:id/step?n=K` | run K iterations (default 1) |
//! | `GET /sessions/:id/artifacts/:kind` | `contour.json`, `mask.pgm`, `tube.pgm`, `xi.rsf1`, `omega.rsf1`, `energy.csv` |
//!
//! Every JSON body carries `"v": 1`. One step may run per session at a
//! time; a concurrent step gets 409.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::evolve::{LandmarkSet, SegmentationConfig, Segmenter};
use crate::geom::{Polyline, Vec2};
use crate::grid::Image;
use crate::io;

/// Upload size limit.
pub const MAX_UPLOAD: usize = 16 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    New,
    Initialized,
    Evolving,
    Converged,
    Error,
}

struct Session {
    upload: Bytes,
    image: Image,
    config: SegmentationConfig,
    landmarks: Option<LandmarkSet>,
    seg: Option<Segmenter>,
    stage: Stage,
    error: Option<String>,
}

impl Session {
    fn summary(&self, id: Uuid) -> Value {
        json!({
            "v": 1,
            "id": id.to_string(),
            "width": self.image.grid.width(),
            "height": self.image.grid.height(),
            "stage": self.stage,
            "iteration": self.seg.as_ref().map_or(0, |s| s.state().iteration),
            "landmarks": self.landmarks.as_ref().map(|l| l.points.clone()),
            "config": self.config,
            "error": self.error,
        })
    }

    fn step_body(&self) -> Value {
        let seg = self.seg.as_ref().expect("initialized session");
        let st = seg.state();
        json!({
            "v": 1,
            "iteration": st.iteration,
            "contour": st.contour,
            "energy": st.energy,
            "area_delta": st.history.last().map_or(0.0, |r| r.area_delta),
            "converged": st.converged,
            "stage": self.stage,
        })
    }

    /// Rebuilds the segmenter from the landmarks (and optionally a contour
    /// through them).
    fn initialize(&mut self, contour: Option<&Polyline>) -> Result<()> {
        let lm = self.landmarks.as_ref().ok_or_else(|| Error::invalid("no landmarks"))?;
        let seg = Segmenter::landmarks(&self.image, lm, contour, &self.config)?;
        self.seg = Some(seg);
        self.stage = Stage::Initialized;
        self.error = None;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    config: SegmentationConfig,
    landmarks: Option<LandmarkSet>,
    contour: Option<Polyline>,
}

/// Shared server state.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<StdMutex<HashMap<Uuid, Arc<Mutex<Session>>>>>,
    persist: Option<PathBuf>,
}

impl AppState {
    /// Sessions saved under `dir` are restored in the initialized stage.
    pub fn with_persistence(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let state = AppState { sessions: Default::default(), persist: Some(dir.clone()) };
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| Uuid::parse_str(n).ok()) else { continue };
            match restore(&path) {
                Ok(s) => {
                    state.sessions.lock().expect("session map").insert(id, Arc::new(Mutex::new(s)));
                }
                Err(e) => eprintln!("skipping saved session {id}: {e}"),
            }
        }
        Ok(state)
    }

    fn get(&self, id: &str) -> std::result::Result<(Uuid, Arc<Mutex<Session>>), ApiError> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::not_found("no such session"))?;
        let map = self.sessions.lock().expect("session map");
        map.get(&id).cloned().map(|s| (id, s)).ok_or_else(|| ApiError::not_found("no such session"))
    }

    fn save(&self, id: Uuid, s: &Session) {
        let Some(dir) = &self.persist else { return };
        let dir = dir.join(id.to_string());
        let p = Persisted { config: s.config.clone(), landmarks: s.landmarks.clone(), contour: s.seg.as_ref().map(|g| g.state().contour.clone()) };
        let res = std::fs::create_dir_all(&dir)
            .and_then(|_| if dir.join("upload").exists() { Ok(()) } else { std::fs::write(dir.join("upload"), &s.upload) })
            .and_then(|_| std::fs::write(dir.join("session.json"), serde_json::to_vec(&p).expect("session serializes")));
        if let Err(e) = res {
            eprintln!("could not save session {id}: {e}");
        }
    }
}

fn restore(dir: &Path) -> Result<Session> {
    let upload = Bytes::from(std::fs::read(dir.join("upload"))?);
    let image = io::image_from_bytes(&upload)?;
    let p: Persisted = serde_json::from_slice(&std::fs::read(dir.join("session.json"))?).map_err(|e| Error::Format(e.to_string()))?;
    let mut s = Session { upload, image, config: p.config, landmarks: p.landmarks, seg: None, stage: Stage::New, error: None };
    if s.landmarks.is_some() {
        s.initialize(p.contour.as_ref())?;
    }
    Ok(s)
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl ApiError {
    fn not_found(m: &str) -> Self {
        ApiError(StatusCode::NOT_FOUND, m.into())
    }

    fn conflict(m: impl Into<String>) -> Self {
        ApiError(StatusCode::CONFLICT, m.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "v": 1, "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn create(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let image = io::image_from_bytes(&body).map_err(|e| ApiError(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.to_string()))?;
    let id = Uuid::new_v4();
    let s = Session { upload: body, image, config: SegmentationConfig::default(), landmarks: None, seg: None, stage: Stage::New, error: None };
    let out = s.summary(id);
    app.save(id, &s);
    app.sessions.lock().expect("session map").insert(id, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn status(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let (id, s) = app.get(&id)?;
    let s = s.lock().await;
    Ok(Json(s.summary(id)))
}

async fn set_config(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let (id, s) = app.get(&id)?;
    let cfg: SegmentationConfig = serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    cfg.validate().map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut s = s.try_lock().map_err(|_| ApiError::conflict("a step is running"))?;
    s.config = cfg;
    if s.landmarks.is_some() {
        let contour = s.seg.as_ref().map(|g| g.state().contour.clone());
        if let Err(e) = s.initialize(contour.as_ref()) {
            s.initialize(None).map_err(|_| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        }
    }
    app.save(id, &s);
    Ok(Json(s.summary(id)))
}

#[derive(Deserialize)]
struct LandmarkBody {
    points: Vec<Vec2>,
    /// Initial contour through the points (for `user_contour` or a single landmark).
    #[serde(default)]
    contour: Option<Polyline>,
}

async fn set_landmarks(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let (id, s) = app.get(&id)?;
    let req: LandmarkBody = serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut guard = s.try_lock().map_err(|_| ApiError::conflict("a step is running"))?;
    let s = &mut *guard;
    let lm = LandmarkSet::new(req.points, s.image.grid).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let seg = Segmenter::landmarks(&s.image, &lm, req.contour.as_ref(), &s.config).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    s.landmarks = Some(lm.clone());
    s.seg = Some(seg);
    s.stage = Stage::Initialized;
    s.error = None;
    app.save(id, s);
    Ok(Json(json!({
        "v": 1,
        "stage": s.stage,
        "landmarks": lm.points,
        "contour": s.seg.as_ref().map(|g| g.state().contour.clone()),
    })))
}

#[derive(Deserialize)]
struct StepQuery {
    n: Option<usize>,
}

async fn step(State(app): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<StepQuery>) -> ApiResult<Json<Value>> {
    let (id, s) = app.get(&id)?;
    let mut guard = s.try_lock_owned().map_err(|_| ApiError::conflict("a step is already running"))?;
    match guard.stage {
        Stage::New => return Err(ApiError::conflict("place landmarks first")),
        Stage::Converged => return Err(ApiError::conflict("the evolution has converged")),
        Stage::Error => return Err(ApiError::conflict(format!("the last step failed: {}", guard.error.clone().unwrap_or_default()))),
        Stage::Initialized | Stage::Evolving => {}
    }
    let n = q.n.unwrap_or(1);
    if n == 0 {
        return Ok(Json(guard.step_body()));
    }
    let app2 = app.clone();
    tokio::task::spawn_blocking(move || {
        let s = &mut *guard;
        // work on a copy so that a failure leaves the last good state
        let mut seg = s.seg.clone().expect("initialized session");
        let mut outcome = Ok(());
        for _ in 0..n {
            if seg.state().converged {
                break;
            }
            if let Err(e) = seg.step() {
                outcome = Err(e);
                break;
            }
        }
        let res = match outcome {
            Ok(()) => {
                s.stage = if seg.state().converged { Stage::Converged } else { Stage::Evolving };
                s.seg = Some(seg);
                Ok(s.step_body())
            }
            Err(e) => {
                s.stage = Stage::Error;
                s.error = Some(e.to_string());
                Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
            }
        };
        app2.save(id, s);
        res
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map(Json)
}

async fn artifact(State(app): State<AppState>, UrlPath((id, kind)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let (_, s) = app.get(&id)?;
    let s = s.lock().await;
    let seg = s.seg.as_ref().ok_or_else(|| ApiError::not_found("no contour yet"))?;
    let too_early = || ApiError::not_found("available after the first step");
    let (ctype, bytes): (&str, Vec<u8>) = match kind.as_str() {
        "contour.json" => ("application/json", io::contour_to_json(&seg.state().contour).into_bytes()),
        "mask.pgm" => ("image/x-portable-graymap", io::mask_to_pgm(&seg.state().mask)),
        "energy.csv" => ("text/csv", seg.energy_csv().into_bytes()),
        "tube.pgm" => ("image/x-portable-graymap", io::mask_to_pgm(&seg.artifacts().ok_or_else(too_early)?.tube)),
        "xi.rsf1" => ("application/octet-stream", io::scalar_to_rsf1(&seg.artifacts().ok_or_else(too_early)?.xi)),
        "omega.rsf1" => ("application/octet-stream", io::vector_to_rsf1(&seg.artifacts().ok_or_else(too_early)?.omega)),
        _ => return Err(ApiError::not_found("unknown artifact")),
    };
    Ok(([(header::CONTENT_TYPE, ctype)], bytes).into_response())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/:id", get(status))
        .route("/sessions/:id/config", put(set_config))
        .route("/sessions/:id/landmarks", put(set_landmarks))
        .route("/sessions/:id/step", post(step))
        .route("/sessions/:id/artifacts/:kind", get(artifact))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(CorsLayer::permissive())
        .with_state(app)
}

/// Serves until the process is stopped.
pub async fn serve(bind: &str, persist: Option<PathBuf>) -> Result<()> {
    let app = match persist {
        Some(dir) => AppState::with_persistence(dir)?,
        None => AppState::default(),
    };
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}
