//! Read-only HTTP front end over one loaded artifact.

use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use nalgebra::DVector;
use parking_lot::Mutex;
use projpost::projector::{backward_stepwise_gram, project_tau, tau_row};
use projpost::{diff_mean, ControlSubset, DiffMean, StopRule};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::artifact::{Artifact, ModelInfo};
use crate::error::Result;
use crate::report::{StepwiseReport, TauPosterior};

pub const CACHE_ENTRIES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub n: usize,
    pub p: usize,
    pub controls: Vec<String>,
    pub n_draws: usize,
    pub outcome: String,
    pub exposure: String,
    pub centered: bool,
    pub model: ModelInfo,
    pub provenance: projpost::Provenance,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRequest {
    #[serde(default)]
    pub include: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectResponse {
    pub include: Vec<String>,
    pub q: usize,
    #[serde(flatten)]
    pub posterior: TauPosterior,
    pub d_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepwiseRequest {
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default)]
    pub keep: Option<usize>,
    #[serde(default)]
    pub max_distance: Option<f64>,
}

fn default_metric() -> String {
    "d_M".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<projpost::Error> for ApiError {
    fn from(e: projpost::Error) -> Self {
        let status = if e.is_numerical() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.message,
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

/// Immutable draws plus the only mutable piece: a cache of treatment rows
/// of the projection operator, keyed by subset bitmask.
pub struct AppState {
    artifact: Artifact,
    original_tau: Vec<f64>,
    original: TauPosterior,
    cache: Mutex<LruCache<Vec<u64>, Arc<DVector<f64>>>>,
}

impl AppState {
    pub fn new(artifact: Artifact) -> Self {
        let original_tau = artifact.draws.tau();
        let original = TauPosterior::from_draws(&original_tau);
        Self {
            artifact,
            original_tau,
            original,
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(CACHE_ENTRIES).unwrap())),
        }
    }

    pub fn meta(&self) -> Meta {
        let h = &self.artifact.header;
        Meta {
            n: h.gram.n,
            p: h.gram.p(),
            controls: h.gram.control_names.clone(),
            n_draws: h.n_draws,
            outcome: h.outcome.clone(),
            exposure: h.exposure.clone(),
            centered: h.centered,
            model: h.model.clone(),
            provenance: h.provenance,
        }
    }

    pub fn original(&self) -> &TauPosterior {
        &self.original
    }

    fn row(&self, phi: &ControlSubset) -> projpost::Result<Arc<DVector<f64>>> {
        let key = phi.bitmask();
        if let Some(row) = self.cache.lock().get(&key) {
            return Ok(row.clone());
        }
        // Computed outside the lock; a racing request may fill the same
        // entry with an identical row.
        let row = Arc::new(tau_row(self.artifact.gram(), phi)?);
        self.cache.lock().put(key, row.clone());
        Ok(row)
    }

    pub fn project(&self, req: &ProjectRequest) -> std::result::Result<ProjectResponse, ApiError> {
        let names = &self.artifact.gram().control_names;
        let phi = ControlSubset::from_names(names, &req.include)?;
        let (posterior, d_m) = if phi.is_full() {
            (self.original.clone(), 0.0)
        } else {
            let row = self.row(&phi)?;
            let tau = project_tau(&self.artifact.draws, &row)?;
            (
                TauPosterior::from_draws(&tau),
                diff_mean(&self.original_tau, &tau)?,
            )
        };
        Ok(ProjectResponse {
            include: phi.included().iter().map(|&j| names[j].clone()).collect(),
            q: phi.q(),
            posterior,
            d_m,
        })
    }

    pub fn stepwise(&self, req: &StepwiseRequest) -> std::result::Result<StepwiseReport, ApiError> {
        if req.metric != "d_M" {
            return Err(ApiError::bad_request(format!(
                "unknown metric {:?}; only \"d_M\" is supported",
                req.metric
            )));
        }
        let gram = self.artifact.gram();
        if let Some(k) = req.keep {
            if k > gram.p() {
                return Err(ApiError::bad_request(format!(
                    "keep {k} exceeds the {} controls",
                    gram.p()
                )));
            }
        }
        if let Some(t) = req.max_distance {
            if !(t >= 0.0) {
                return Err(ApiError::bad_request("max_distance must be non-negative"));
            }
        }
        let stop = StopRule {
            keep: req.keep,
            max_distance: req.max_distance,
            keep_draws: false,
        };
        let path = backward_stepwise_gram(gram, &self.artifact.draws, &DiffMean, stop)?;
        Ok(StepwiseReport::from_path(
            &path,
            &gram.control_names,
            &req.metric,
        ))
    }
}

/// Request bodies must be JSON objects.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> std::result::Result<T, ApiError> {
    let bad = |e: serde_json::Error| ApiError::bad_request(format!("malformed body: {e}"));
    let value: serde_json::Value = serde_json::from_slice(body).map_err(bad)?;
    if !value.is_object() {
        return Err(ApiError::bad_request(
            "malformed body: expected a JSON object",
        ));
    }
    serde_json::from_value(value).map_err(bad)
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> std::result::Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: format!("worker failed: {e}"),
        }),
    }
}

async fn get_meta(State(state): State<Arc<AppState>>) -> Json<Meta> {
    Json(state.meta())
}

async fn get_tau(State(state): State<Arc<AppState>>) -> Json<TauPosterior> {
    Json(state.original().clone())
}

async fn post_project(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<ProjectResponse> {
    let req: ProjectRequest = parse_body(&body)?;
    blocking(move || state.project(&req)).await
}

async fn post_stepwise(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<StepwiseReport> {
    let req: StepwiseRequest = if body.iter().all(u8::is_ascii_whitespace) {
        parse_body(&Bytes::from_static(b"{}"))?
    } else {
        parse_body(&body)?
    };
    blocking(move || state.stepwise(&req)).await
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/meta", get(get_meta))
        .route("/posterior/tau", get(get_tau))
        .route("/project", post(post_project))
        .route("/stepwise", post(post_stepwise));
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(artifact: Artifact, addr: SocketAddr, ui_dir: Option<PathBuf>) -> Result<()> {
    let app = router(Arc::new(AppState::new(artifact)), ui_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
