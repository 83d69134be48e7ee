//! Local project service for the viewpoint editor.
//!
//! | method | path            | body / query           | response                                  |
//! |--------|-----------------|------------------------|-------------------------------------------|
//! | GET    | `/map`          | `?leaf=<m>` (0.25)     | downsampled map as a map document         |
//! | GET    | `/viewpoints`   |                        | the stored mission request, byte for byte |
//! | PUT    | `/viewpoints`   | mission request        | validation report; 422 if rejected        |
//! | POST   | `/plan`         |                        | plan set; 409 while a job runs            |
//! | POST   | `/simulate`     | `{"seed": n}` optional | simulation document                       |
//! | GET    | `/trajectories` | `?flight=<i>` optional | CSV                                       |
//!
//! Malformed or wrong-version documents get 400, every error body is an
//! error document, and every response carries an `x-format-version`
//! header (JSON bodies also carry `format_version`).
//!
//! Reads run concurrently. Writes to the project go through one writer
//! lock, and planning and simulation jobs hold a job lock that is only
//! ever tried, never waited for, so a second job is refused rather than
//! queued.

use std::path::PathBuf;
use std::sync::{Arc, OnceLock, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use nave_core::geom::{voxel_downsample, PointCloud};
use nave_core::mission::MissionRequest;
use nave_core::planner::{MissionPlanSet, OccupancyGrid};
use nave_core::sim::Environment;
use nave_core::FORMAT_VERSION;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::docs::{parse_versioned, to_json, write_text, ErrorDocument, MapDocument, PipelineConfig, TrajectorySet};
use crate::error::CliError;
use crate::pipeline;

pub const MISSION_FILE: &str = "mission.json";
pub const PLANSET_FILE: &str = "planset.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.json";
pub const SIMULATION_FILE: &str = "simulation.json";

#[derive(Default)]
struct Documents {
    /// Exactly the bytes of the last accepted PUT.
    mission: Option<String>,
    plans: Option<MissionPlanSet>,
    trajectories: Option<TrajectorySet>,
}

struct Inner {
    project: PathBuf,
    map: PointCloud,
    config: PipelineConfig,
    default_seed: u64,
    grid: OnceLock<Result<OccupancyGrid, String>>,
    env: OnceLock<Result<Environment, String>>,
    docs: RwLock<Documents>,
    writer: Mutex<()>,
    job: Arc<Mutex<()>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens (creating if needed) a project directory and loads any
    /// documents it already holds.
    pub fn open(
        project: PathBuf,
        map: PointCloud,
        config: PipelineConfig,
        default_seed: u64,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(&project).map_err(|e| CliError::io(&project, e))?;
        let read = |name: &str| -> Result<Option<String>, CliError> {
            let path = project.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(CliError::io(path, e)),
            }
        };
        let mission = read(MISSION_FILE)?;
        if let Some(m) = &mission {
            MissionRequest::from_json(m)?;
        }
        let plans = read(PLANSET_FILE)?.map(|s| parse_versioned(&s)).transpose()?;
        let trajectories = read(TRAJECTORIES_FILE)?.map(|s| parse_versioned(&s)).transpose()?;
        Ok(Self {
            inner: Arc::new(Inner {
                project,
                map,
                config,
                default_seed,
                grid: OnceLock::new(),
                env: OnceLock::new(),
                docs: RwLock::new(Documents {
                    mission,
                    plans,
                    trajectories,
                }),
                writer: Mutex::new(()),
                job: Arc::new(Mutex::new(())),
            }),
        })
    }

    /// Takes the job lock as a running planning job would; while the guard
    /// lives, `POST /plan` and `POST /simulate` answer 409.
    pub fn try_begin_job(&self) -> Option<OwnedMutexGuard<()>> {
        self.inner.job.clone().try_lock_owned().ok()
    }

    fn grid(&self) -> Result<&OccupancyGrid, CliError> {
        self.inner
            .grid
            .get_or_init(|| pipeline::build_grid(&self.inner.map, &self.inner.config).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| CliError::Planning(nave_core::planner::PlanError::Parameter(e.clone())))
    }

    fn env(&self) -> Result<&Environment, CliError> {
        self.inner
            .env
            .get_or_init(|| Environment::new(&self.inner.map).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| CliError::Simulation(nave_core::sim::SimError::Parameter(e.clone())))
    }

    async fn persist(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.inner.project.join(name);
        let text = text.to_owned();
        tokio::task::spawn_blocking(move || write_text(&path, &text))
            .await
            .map_err(|e| CliError::Service(e.to_string()))?
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/map", get(get_map))
        .route("/viewpoints", get(get_viewpoints).put(put_viewpoints))
        .route("/plan", post(post_plan))
        .route("/simulate", post(post_simulate))
        .route("/trajectories", get(get_trajectories))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(axum::middleware::map_response(stamp_version))
        .with_state(state)
}

async fn stamp_version(mut res: Response) -> Response {
    res.headers_mut()
        .insert("x-format-version", HeaderValue::from(FORMAT_VERSION));
    res
}

/// Binds, prints the bound address and serves until the process ends.
pub fn serve_blocking(state: AppState, host: &str, port: u16) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::Service(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::Service(e.to_string()))?;
        println!("listening on http://{addr}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(state))
            .await
            .map_err(|e| CliError::Service(e.to_string()))
    })
}

/// An error response: status plus error document.
pub struct ApiError {
    status: StatusCode,
    body: String,
}

impl ApiError {
    fn new(status: StatusCode, class: &str, msg: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: to_json(&ErrorDocument::new(class, msg)),
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} in this project"))
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "busy", "a planning job is running")
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        use crate::error::ErrorClass as C;
        match e {
            CliError::Rejected(report) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: to_json(&report),
            },
            other => {
                let status = match other.class() {
                    C::Format | C::Version | C::Usage => StatusCode::BAD_REQUEST,
                    C::Planning | C::Collision | C::Trajectory | C::Formation | C::Alignment => {
                        StatusCode::UNPROCESSABLE_ENTITY
                    }
                    C::Io | C::Simulation | C::Service => StatusCode::INTERNAL_SERVER_ERROR,
                    C::Rejected => unreachable!("handled above"),
                };
                Self::new(status, other.class().as_str(), other)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, self.body)
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, CliError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "service", e))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct MapQuery {
    leaf: Option<f64>,
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", e.body_text()))
}

async fn get_map(
    State(state): State<AppState>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let leaf = q.leaf.unwrap_or(0.25);
    if !(leaf > 0.0 && leaf.is_finite()) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "format",
            format!("leaf must be positive, got {leaf}"),
        ));
    }
    let body = blocking(move || {
        let cloud = voxel_downsample(&state.inner.map, leaf).map_err(|e| CliError::Format(e.to_string()))?;
        let points: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Ok(serde_json::to_string(&MapDocument {
            format_version: FORMAT_VERSION,
            leaf,
            count: points.len(),
            points,
        })
        .expect("map document serializes"))
    })
    .await?;
    Ok(json_response(StatusCode::OK, body))
}

async fn get_viewpoints(State(state): State<AppState>) -> Result<Response, ApiError> {
    let doc = state.inner.docs.read().expect("document lock").mission.clone();
    doc.map(|d| json_response(StatusCode::OK, d))
        .ok_or_else(|| ApiError::not_found("mission request"))
}

async fn put_viewpoints(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", format!("body is not UTF-8: {e}")))?;
    let req = MissionRequest::from_json(&text).map_err(CliError::from)?;
    req.check().map_err(CliError::from)?;
    let report = pipeline::check_mission(&req, &state.inner.config)?;
    let _w = state.inner.writer.lock().await;
    state.persist(MISSION_FILE, &text).await?;
    {
        let mut docs = state.inner.docs.write().expect("document lock");
        docs.mission = Some(text);
        docs.plans = None;
        docs.trajectories = None;
    }
    Ok(json_response(StatusCode::OK, to_json(&report)))
}

async fn post_plan(State(state): State<AppState>) -> Result<Response, ApiError> {
    let _job = state.try_begin_job().ok_or_else(ApiError::busy)?;
    let text = state
        .inner
        .docs
        .read()
        .expect("document lock")
        .mission
        .clone()
        .ok_or_else(|| ApiError::not_found("mission request"))?;
    let worker = state.clone();
    let planned = text.clone();
    let set = blocking(move || {
        let req = MissionRequest::from_json(&planned)?;
        let grid = worker.grid()?;
        pipeline::run_plan(&req, grid, &worker.inner.config)
    })
    .await?;
    let body = set.to_json();
    let _w = state.inner.writer.lock().await;
    if state.inner.docs.read().expect("document lock").mission.as_deref() != Some(text.as_str()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "busy",
            "the viewpoints changed while planning; plan again",
        ));
    }
    state.persist(PLANSET_FILE, &body).await?;
    {
        let mut docs = state.inner.docs.write().expect("document lock");
        docs.plans = Some(set);
        docs.trajectories = None;
    }
    Ok(json_response(StatusCode::OK, body))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    seed: Option<u64>,
}

async fn post_simulate(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SimulateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SimulateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", e))?
    };
    let _job = state.try_begin_job().ok_or_else(ApiError::busy)?;
    let (plans, mission) = {
        let docs = state.inner.docs.read().expect("document lock");
        (docs.plans.clone(), docs.mission.clone())
    };
    let plans = plans.ok_or_else(|| ApiError::not_found("plan set"))?;
    let seed = req.seed.unwrap_or(state.inner.default_seed);
    let worker = state.clone();
    let (trajs, doc) = blocking(move || {
        let config = &worker.inner.config;
        let grid = worker.grid()?;
        let mut trajs = pipeline::run_trajectories(&plans, grid, config)?;
        let team = match mission {
            Some(m) => MissionRequest::from_json(&m)?.team_size,
            None => 1,
        };
        if team >= 2 {
            trajs = pipeline::run_formation(&plans, &trajs, grid, config)?.0;
        }
        let out = pipeline::run_simulation(&trajs, worker.env()?, config, seed, plans.t_max)?;
        Ok((trajs, out.document))
    })
    .await?;
    let body = to_json(&doc);
    let _w = state.inner.writer.lock().await;
    state.persist(TRAJECTORIES_FILE, &to_json(&trajs)).await?;
    state.persist(SIMULATION_FILE, &body).await?;
    state.inner.docs.write().expect("document lock").trajectories = Some(trajs);
    Ok(json_response(StatusCode::OK, body))
}

#[derive(Debug, Deserialize)]
struct TrajectoryQuery {
    flight: Option<usize>,
}

async fn get_trajectories(
    State(state): State<AppState>,
    q: Result<Query<TrajectoryQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let docs = state.inner.docs.read().expect("document lock");
    let set = docs
        .trajectories
        .as_ref()
        .ok_or_else(|| ApiError::not_found("trajectories"))?;
    let csv = match q.flight {
        None => set.to_csv(),
        Some(f) => {
            let filtered = TrajectorySet {
                entries: set.entries.iter().filter(|e| e.flight == f).cloned().collect(),
                ..set.clone()
            };
            if filtered.entries.is_empty() {
                return Err(ApiError::not_found(&format!("flight {f}")));
            }
            filtered.to_csv()
        }
    };
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}
