//! HTTP/JSON API over the engine.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::engine::Engine;
use crate::error::{to_api, EngineError};

pub struct ApiFailure(pub EngineError);

impl From<EngineError> for ApiFailure {
    fn from(e: EngineError) -> Self {
        ApiFailure(e)
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let (status, body) = to_api(&self.0);
        let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiFailure>;

/// Runs blocking engine work off the async workers.
async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
{
    let engine = Arc::clone(engine);
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiFailure(EngineError::Storage(format!("worker failed: {e}"))))?
        .map(Json)
        .map_err(ApiFailure)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiFailure> {
    serde_json::from_slice(body).map_err(|e| ApiFailure(EngineError::Validation(format!("invalid JSON body: {e}"))))
}

#[derive(Deserialize)]
struct NetlistBody {
    netlist: String,
}

async fn post_circuit(State(engine): State<Arc<Engine>>, req: Request) -> Response {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let result = if is_multipart {
        post_scene(engine, req).await
    } else {
        match Bytes::from_request(req, &()).await {
            Ok(body) => match parse_json::<NetlistBody>(&body) {
                Ok(b) => blocking(&engine, move |e| e.add_netlist(&b.netlist)).await,
                Err(e) => Err(e),
            },
            Err(e) => Err(ApiFailure(EngineError::Validation(e.to_string()))),
        }
    };
    result.into_response()
}

/// Multipart fields: `detections` (JSON lines) and `image` (binary PGM).
async fn post_scene(engine: Arc<Engine>, req: Request) -> ApiResult<crate::engine::CircuitInfo> {
    let bad = |m: String| ApiFailure(EngineError::Validation(m));
    let mut mp = Multipart::from_request(req, &()).await.map_err(|e| bad(e.to_string()))?;
    let mut detections = None;
    let mut image = None;
    while let Some(field) = mp.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name() {
            Some("detections") => detections = Some(field.text().await.map_err(|e| bad(e.to_string()))?),
            Some("image") => image = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?),
            _ => {}
        }
    }
    let detections = detections.ok_or_else(|| bad("missing multipart field `detections`".into()))?;
    let image = image.ok_or_else(|| bad("missing multipart field `image`".into()))?;
    blocking(&engine, move |e| e.add_scene(&detections, &image)).await
}

async fn get_embedding(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> impl IntoResponse {
    blocking(&engine, move |e| e.embedding(&id)).await
}

#[derive(Deserialize)]
struct SimilarQuery {
    k: Option<String>,
}

async fn get_similar(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<SimilarQuery>,
) -> impl IntoResponse {
    let k = match q.k.map(|k| k.parse::<usize>()) {
        None => None,
        Some(Ok(k)) => Some(k),
        Some(Err(_)) => return Err(ApiFailure(EngineError::Validation("k must be a positive integer".into()))),
    };
    blocking(&engine, move |e| e.similar(&id, k)).await
}

#[derive(Deserialize)]
struct SimulateQuery {
    superposition: Option<String>,
}

async fn get_simulate(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<SimulateQuery>,
) -> impl IntoResponse {
    let sp = q
        .superposition
        .is_some_and(|v| !matches!(v.as_str(), "0" | "false"));
    blocking(&engine, move |e| e.simulate(&id, sp)).await
}

#[derive(Deserialize)]
struct SessionBody {
    circuit_id: String,
}

async fn post_session(State(engine): State<Arc<Engine>>, body: Bytes) -> impl IntoResponse {
    let b: SessionBody = parse_json(&body)?;
    blocking(&engine, move |e| e.create_session(&b.circuit_id)).await
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(State(engine): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> impl IntoResponse {
    let b: MessageBody = parse_json(&body)?;
    blocking(&engine, move |e| e.send_message(&id, &b.text)).await
}

async fn get_session(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> impl IntoResponse {
    blocking(&engine, move |e| e.session(&id)).await
}

async fn get_health(State(engine): State<Arc<Engine>>) -> impl IntoResponse {
    Json(engine.health())
}

#[derive(Serialize)]
struct NotFound {
    code: &'static str,
    message: &'static str,
}

async fn not_found() -> impl IntoResponse {
    (
        StatusCode::NOT_FOUND,
        Json(NotFound {
            code: "not_found",
            message: "no such endpoint",
        }),
    )
}

pub fn router(engine: Arc<Engine>) -> Router {
    let ui = engine.config.ui_dir.clone();
    let api = Router::new()
        .route("/circuits", post(post_circuit))
        .route("/circuits/{id}/embedding", get(get_embedding))
        .route("/circuits/{id}/similar", get(get_similar))
        .route("/circuits/{id}/simulate", get(get_simulate))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}", get(get_session))
        .route("/health", get(get_health))
        .with_state(engine);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

pub async fn serve(engine: Arc<Engine>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&engine.config.bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
