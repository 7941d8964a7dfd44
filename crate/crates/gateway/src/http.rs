//! JSON over HTTP for the console.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lambda_env::SessionError;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::service::{CreateSession, ServiceError, SessionService};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub action: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::Finished(_) | ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Session(SessionError::Finished) => StatusCode::CONFLICT,
            ServiceError::Session(_) => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

type Reply<T> = Result<Json<T>, ApiError>;

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(ticket))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/observation", get(observation))
        .route("/sessions/{id}/result", get(result))
        .layer(CorsLayer::permissive())
        .with_state(service)
}

async fn create(
    State(service): State<Arc<SessionService>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::service::Created>), ApiError> {
    let Json(request) = body?;
    // Space generation can take a while; keep it off the reactor.
    let created = tokio::task::spawn_blocking(move || service.create(&request))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn action(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> Reply<crate::service::ActionReply> {
    let Json(request) = body?;
    Ok(Json(service.submit_action(&id, request.action)?))
}

async fn ticket(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> Reply<crate::service::Ticket> {
    Ok(Json(service.ticket(&id)?))
}

async fn observation(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> Reply<crate::service::ObservationJson> {
    Ok(Json(service.observation(&id)?))
}

async fn result(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> Reply<crate::service::ResultSummary> {
    Ok(Json(service.result(&id)?))
}

/// Serves until ctrl-c, purging idle sessions in the background.
pub async fn serve(addr: SocketAddr, idle_timeout: Duration) -> std::io::Result<()> {
    let service = Arc::new(SessionService::new(idle_timeout));
    let purger = Arc::clone(&service);
    let period = (idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            purger.purge_idle(Instant::now());
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
