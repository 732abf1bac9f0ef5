//! JSON-over-HTTP front end for [`Service`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::session::{Service, ServiceError};
use crate::store::StoreError;

#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareRequest {
    pub run_a: u32,
    pub run_b: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u32,
    pub session_id: String,
    pub label: String,
    pub parent: Option<u32>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Store(
                StoreError::UnknownRun(_) | StoreError::UnknownSession(_) | StoreError::UnknownFile { .. },
            ) => StatusCode::NOT_FOUND,
            ServiceError::Store(StoreError::LockTimeout(_)) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ServiceError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking service work off the async executor.
async fn blocking<T, F>(service: &Arc<Service>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> ApiResult<T> + Send + 'static,
{
    let service = service.clone();
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn create_session(State(svc): State<Arc<Service>>) -> ApiResult<(StatusCode, Json<NewSession>)> {
    let session = blocking(&svc, |s| Ok(s.create_session()?)).await?;
    Ok((
        StatusCode::CREATED,
        Json(NewSession {
            session_id: session.session_id,
        }),
    ))
}

async fn post_turn(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<TurnRequest>,
) -> ApiResult<Response> {
    let result = blocking(&svc, move |s| Ok(s.handle_turn(&id, &req.text)?)).await?;
    Ok(Json(result).into_response())
}

async fn history(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = blocking(&svc, move |s| Ok(s.history(&id)?)).await?;
    Ok(Json(session).into_response())
}

async fn list_runs(State(svc): State<Arc<Service>>) -> ApiResult<Json<Vec<RunSummary>>> {
    let runs = blocking(&svc, |s| Ok(s.store.list_runs()?)).await?;
    Ok(Json(
        runs.into_iter()
            .map(|r| RunSummary {
                run_id: r.run_id,
                session_id: r.session_id,
                label: r.label,
                parent: r.parent,
            })
            .collect(),
    ))
}

async fn get_run(State(svc): State<Arc<Service>>, Path(id): Path<u32>) -> ApiResult<Response> {
    let run = blocking(&svc, move |s| Ok(s.store.load_run(id)?)).await?;
    Ok(Json(run).into_response())
}

async fn metrics(State(svc): State<Arc<Service>>, Path(id): Path<u32>) -> ApiResult<Response> {
    let run = blocking(&svc, move |s| Ok(s.store.load_run(id)?)).await?;
    Ok(Json(run.metrics).into_response())
}

async fn file(State(svc): State<Arc<Service>>, Path((id, kind)): Path<(u32, String)>) -> ApiResult<Response> {
    let bytes = blocking(&svc, move |s| {
        let run = s.store.load_run(id)?;
        let a = &run.artifacts;
        let name = match kind.as_str() {
            "net" => Some(a.net.clone()),
            "rou" => Some(a.rou.clone()),
            "add" => a.add.clone(),
            "sumocfg" => Some(a.sumocfg.clone()),
            "edgedata" => Some(a.edgedata.clone()),
            _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown file kind `{kind}`"))),
        };
        let name = name.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("run {id} has no `{kind}` file")))?;
        Ok(s.store.run_file(id, &name)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/xml")], bytes).into_response())
}

async fn compare(State(svc): State<Arc<Service>>, Json(req): Json<CompareRequest>) -> ApiResult<Response> {
    let report = blocking(&svc, move |s| Ok(s.compare(req.run_a, req.run_b)?)).await?;
    Ok(Json(report).into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/history", get(history))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/metrics", get(metrics))
        .route("/runs/{id}/files/{kind}", get(file))
        .route("/compare", post(compare))
        .with_state(service)
}

pub async fn serve(service: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
