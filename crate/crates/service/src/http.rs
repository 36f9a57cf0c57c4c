use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use fairlicit_core::elicitation::Exploration;
use fairlicit_core::wire::to_json_line;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::api::{
    DiscordantQuery, FairnessQuery, MetricsQuery, ModelImport, NewSession, Service,
    SimilarityQuery, SyntheticRequest, TrainRequest,
};
use crate::error::{ApiError, ErrorKind};

type Shared = Arc<Service>;
type Reply = Result<Response, ApiError>;

pub fn status(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::Invalid => StatusCode::BAD_REQUEST,
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::Conflict => StatusCode::CONFLICT,
        ErrorKind::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = to_json_line(&self.body());
        (status(self.kind), [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json_text(code: StatusCode, text: String) -> Response {
    (code, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn json<T: Serialize>(value: &T) -> Response {
    json_text(StatusCode::OK, to_json_line(value))
}

fn created<T: Serialize>(value: &T) -> Response {
    json_text(StatusCode::CREATED, to_json_line(value))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t)
        .map_err(|e| ApiError::invalid("BadQuery", e.body_text()))
}

fn body<T: DeserializeOwned>(text: &str) -> Result<T, ApiError> {
    Ok(serde_json::from_str(text)?)
}

/// Every route of the API over `service`, with permissive CORS.
pub fn router(service: Service) -> Router {
    let state: Shared = Arc::new(service);
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(import_dataset))
        .route("/datasets/synthetic", post(synthetic_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/metrics", get(metrics))
        .route("/datasets/{id}/fairness", get(fairness))
        .route("/datasets/{id}/similarity", get(similarity))
        .route("/datasets/{id}/discordant", get(discordant))
        .route("/sessions", get(list_sessions).post(start_session))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/next", get(next_question))
        .route("/sessions/{id}/responses", post(record_response))
        .route("/sessions/{id}/events", post(record_event))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/export", get(export_session))
        .route("/analysis/summary", get(summary))
        .route("/train", post(train))
        .route("/models", post(import_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/report", get(model_report))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::not_found("UnknownRoute", "no such endpoint")
}

async fn health() -> Response {
    json(&serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Default, Deserialize)]
struct IdParam {
    #[serde(default)]
    id: Option<String>,
}

async fn list_datasets(State(s): State<Shared>) -> Reply {
    Ok(json(&s.list_datasets()?))
}

async fn import_dataset(State(s): State<Shared>, q: Result<Query<IdParam>, QueryRejection>, text: String) -> Reply {
    let q = query(q)?;
    Ok(created(&s.import_dataset(q.id.as_deref(), &text)?))
}

async fn synthetic_dataset(State(s): State<Shared>, q: Result<Query<IdParam>, QueryRejection>, text: String) -> Reply {
    let q = query(q)?;
    let req: SyntheticRequest = body(&text)?;
    Ok(created(&s.synthetic_dataset(q.id.as_deref(), req)?))
}

async fn get_dataset(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json_text(StatusCode::OK, s.dataset_json(&id)?))
}

async fn metrics(State(s): State<Shared>, Path(id): Path<String>, q: Result<Query<MetricsQuery>, QueryRejection>) -> Reply {
    Ok(json(&s.metrics(&id, &query(q)?)?))
}

async fn fairness(State(s): State<Shared>, Path(id): Path<String>, q: Result<Query<FairnessQuery>, QueryRejection>) -> Reply {
    Ok(json(&s.fairness(&id, &query(q)?)?))
}

async fn similarity(State(s): State<Shared>, Path(id): Path<String>, q: Result<Query<SimilarityQuery>, QueryRejection>) -> Reply {
    Ok(json(&s.similarity(&id, &query(q)?)?))
}

async fn discordant(State(s): State<Shared>, Path(id): Path<String>, q: Result<Query<DiscordantQuery>, QueryRejection>) -> Reply {
    Ok(json(&s.discordant(&id, &query(q)?)?))
}

async fn list_sessions(State(s): State<Shared>) -> Reply {
    Ok(json(&s.list_sessions()?))
}

async fn start_session(State(s): State<Shared>, text: String) -> Reply {
    let req: NewSession = body(if text.trim().is_empty() { "{}" } else { &text })?;
    Ok(created(&s.start_session(req)?))
}

async fn import_session(State(s): State<Shared>, text: String) -> Reply {
    Ok(created(&s.import_session(&text)?))
}

async fn session_status(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json(&s.session_status(&id)?))
}

async fn next_question(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json(&s.next_question(&id)?))
}

async fn record_response(State(s): State<Shared>, Path(id): Path<String>, text: String) -> Reply {
    Ok(json(&s.record_response(&id, &text)?))
}

async fn record_event(State(s): State<Shared>, Path(id): Path<String>, text: String) -> Reply {
    let exploration: Exploration = body(&text)?;
    Ok(json(&s.record_event(&id, exploration)?))
}

async fn advance(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json(&s.advance(&id)?))
}

async fn export_session(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json_text(StatusCode::OK, s.export_session(&id)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct SummaryQuery {
    /// Comma-separated session ids; every stored session when absent.
    #[serde(default)]
    pub sessions: Option<String>,
    /// `json` (default) or `csv`.
    #[serde(default)]
    pub format: Option<String>,
    /// With `format=csv`: `support` (default), `attribute`, `pair` or `consistency`.
    #[serde(default)]
    pub table: Option<String>,
}

pub fn session_list(text: Option<&str>) -> Vec<String> {
    text.map(|t| {
        t.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    })
    .unwrap_or_default()
}

/// Renders one table of `summary` as CSV.
pub fn summary_csv(
    summary: &fairlicit_core::analysis::AggregateSummary,
    table: Option<&str>,
) -> Result<String, ApiError> {
    match table.unwrap_or("support") {
        "support" => Ok(summary.support_csv()),
        "attribute" => Ok(summary.attribute_csv()),
        "pair" => Ok(summary.pair_csv()),
        "consistency" => Ok(summary.consistency_csv()),
        other => Err(ApiError::invalid("BadQuery", format!("unknown table {other:?}"))),
    }
}

async fn summary(State(s): State<Shared>, q: Result<Query<SummaryQuery>, QueryRejection>) -> Reply {
    let q = query(q)?;
    let summary = s.summary(&session_list(q.sessions.as_deref()))?;
    match q.format.as_deref() {
        None | Some("json") => Ok(json(&summary)),
        Some("csv") => {
            let text = summary_csv(&summary, q.table.as_deref())?;
            Ok((StatusCode::OK, [(header::CONTENT_TYPE, "text/csv")], text).into_response())
        }
        Some(other) => Err(ApiError::invalid("BadQuery", format!("unknown format {other:?}"))),
    }
}

async fn train(State(s): State<Shared>, text: String) -> Reply {
    let req: TrainRequest = body(if text.trim().is_empty() { "{}" } else { &text })?;
    let record = tokio::task::spawn_blocking(move || s.train(req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(created(&record))
}

async fn import_model(State(s): State<Shared>, text: String) -> Reply {
    let req: ModelImport = body(&text)?;
    Ok(created(&s.import_model(req)?))
}

async fn get_model(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json_text(StatusCode::OK, s.model_json(&id)?))
}

async fn model_report(State(s): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(json_text(StatusCode::OK, s.model_report(&id)?))
}
