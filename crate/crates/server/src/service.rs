//! HTTP routes over a shared [`Directory`].
//!
//! Handlers are thin wrappers around the `*_body` functions, which the
//! command line calls too, so both surfaces emit the same bytes.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use ypsp_core::geo::GeoError;
use ypsp_core::ingest::IngestError;
use ypsp_core::query::{row_key, ResultSet};
use ypsp_core::schema::{BusinessRecord, SchemaError};
use ypsp_core::store::Iri;
use ypsp_core::{Directory, DirectoryError, StructuredQuery};

use crate::federation::{fanout, new_rows, EndpointConfig, FederationError};

/// Largest accepted SPARQL query text.
pub const MAX_QUERY_BYTES: usize = 64 * 1024;
pub const SPARQL_JSON: &str = "application/sparql-results+json";

pub struct AppState {
    dir: RwLock<Directory>,
    writer_timeout: Duration,
    endpoints: Vec<EndpointConfig>,
    client: reqwest::Client,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(dir: Directory, writer_timeout: Duration, endpoints: Vec<EndpointConfig>) -> Shared {
        Arc::new(AppState { dir: RwLock::new(dir), writer_timeout, endpoints, client: reqwest::Client::new() })
    }

    pub fn endpoints(&self) -> &[EndpointConfig] {
        &self.endpoints
    }

    pub fn client(&self) -> &reqwest::Client {
        &self.client
    }

    pub async fn read(&self) -> RwLockReadGuard<'_, Directory> {
        self.dir.read().await
    }

    /// Writer access, or 503 once the configured wait runs out.
    pub async fn write(&self) -> Result<RwLockWriteGuard<'_, Directory>, ApiError> {
        tokio::time::timeout(self.writer_timeout, self.dir.write())
            .await
            .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "store busy, retry later"))
    }

    /// Reader access with the geo index rebuilt if a write left it stale.
    async fn read_fresh(&self) -> Result<RwLockReadGuard<'_, Directory>, ApiError> {
        let guard = self.dir.read().await;
        if !guard.geo_is_stale() {
            return Ok(guard);
        }
        drop(guard);
        let mut w = self.write().await?;
        if w.geo_is_stale() {
            w.refresh_geo();
        }
        Ok(w.downgrade())
    }
}

/// Error response; the body always carries an `error` string.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": message.into() }) }
    }

    fn with(mut self, key: &str, value: impl serde::Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("json");
        self
    }

    pub fn message(&self) -> &str {
        self.body["error"].as_str().unwrap_or_default()
    }

    fn from_directory(e: DirectoryError, unknown_class: StatusCode) -> Self {
        let msg = e.to_string();
        match e {
            DirectoryError::UnknownClass(_) => ApiError::new(unknown_class, msg),
            DirectoryError::InvalidQuery(v) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg).with("violations", v),
            DirectoryError::Locality(GeoError::UnknownLocality { suggestions, .. }) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg).with("suggestions", suggestions)
            }
            DirectoryError::Locality(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg),
            DirectoryError::Parse(p) => ApiError::new(StatusCode::BAD_REQUEST, p.message)
                .with("line", p.line)
                .with("column", p.column),
            DirectoryError::EmptyQuery => ApiError::new(StatusCode::BAD_REQUEST, msg),
            DirectoryError::Ingest(IngestError::Invalid(v)) | DirectoryError::Schema(SchemaError::Invalid(v)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
                    .with("violations", v.iter().map(|x| x.to_string()).collect::<Vec<_>>())
                    .with("details", v)
            }
            DirectoryError::Ingest(IngestError::Duplicate { existing, .. }) => {
                ApiError::new(StatusCode::CONFLICT, msg).with("existing", existing)
            }
            DirectoryError::Ingest(IngestError::NotFound(_)) => ApiError::new(StatusCode::NOT_FOUND, msg),
            DirectoryError::Ingest(IngestError::Schema(SchemaError::UnknownClass(_)))
            | DirectoryError::Schema(SchemaError::UnknownClass(_)) => ApiError::new(unknown_class, msg),
            DirectoryError::Ingest(_) | DirectoryError::Schema(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg),
            DirectoryError::Data(_) => ApiError::new(StatusCode::BAD_REQUEST, msg),
            DirectoryError::Relax(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, [(header::CONTENT_TYPE, "application/json")], self.body.to_string()).into_response()
    }
}

fn json_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        ApiError::new(status, format!("request body: {e}"))
    })
}

/// `/sparql` body for `text`.
pub async fn sparql_body(state: &AppState, text: &str) -> Result<Vec<u8>, ApiError> {
    if text.len() > MAX_QUERY_BYTES {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("query is {} bytes, limit is {MAX_QUERY_BYTES}", text.len()),
        ));
    }
    let dir = state.read_fresh().await?;
    dir.sparql(text).map_err(|e| ApiError::from_directory(e, StatusCode::UNPROCESSABLE_ENTITY))
}

/// `/search` body for a JSON request.
pub async fn search_body(state: &AppState, body: &[u8]) -> Result<Vec<u8>, ApiError> {
    let sq: StructuredQuery = json_body(body)?;
    let unprocessable = |e| ApiError::from_directory(e, StatusCode::UNPROCESSABLE_ENTITY);
    let (mut outcome, text) = {
        let dir = state.read_fresh().await?;
        let outcome = dir.search(&sq).map_err(unprocessable)?;
        let text = dir.structured_to_sparql(&sq).map_err(unprocessable)?;
        (outcome, text)
    };
    if sq.federate {
        let report = match fanout(&state.client, &text, &state.endpoints, Some(&sq.class)).await {
            Ok(fed) => {
                merge_remote(&mut outcome, &fed.merged);
                fed.report()
            }
            Err(e @ FederationError::NoEndpoints) => json!({ "partial": false, "endpoints": {}, "error": e.to_string() }),
            Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        };
        let mut report = report;
        report["relaxation"] = json!("local-only");
        outcome.federation = Some(report);
    }
    Ok(outcome.to_bytes())
}

/// Remote rows answer the unrelaxed query, so they sit at penalty 0 and
/// outrank any local relaxed rows.
fn merge_remote(outcome: &mut ypsp_core::directory::SearchOutcome, remote: &ResultSet) {
    let vars = outcome.query.select.clone();
    let mut local = ResultSet::new(vars.clone());
    local.rows = outcome.rows.iter().map(|r| r.binding.clone()).collect();
    let fresh: Vec<_> = new_rows(&local, remote).into_iter().cloned().collect();
    if fresh.is_empty() {
        return;
    }
    if outcome.rows.iter().all(|r| r.penalty > 0.0) {
        outcome.rows.clear();
    }
    outcome.rows.extend(fresh.into_iter().map(|binding| ypsp_core::directory::SearchRow {
        penalty: 0.0,
        relaxations: Vec::new(),
        binding,
    }));
    outcome
        .rows
        .sort_by(|a, b| a.penalty.total_cmp(&b.penalty).then_with(|| row_key(&vars, &a.binding).cmp(&row_key(&vars, &b.binding))));
    outcome.exhausted = outcome.rows.is_empty();
}

/// `/register`: 201 with the receipt.
pub async fn register_body(state: &AppState, body: &[u8]) -> Result<Vec<u8>, ApiError> {
    let record: BusinessRecord = json_body(body)?;
    let mut dir = state.write().await?;
    let receipt = dir.register(&record).map_err(|e| ApiError::from_directory(e, StatusCode::NOT_FOUND))?;
    Ok(serde_json::to_vec(&receipt).expect("json"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateRequest {
    iri: String,
    record: BusinessRecord,
}

/// `/update`: replaces every fact about an entity.
pub async fn update_body(state: &AppState, body: &[u8]) -> Result<Vec<u8>, ApiError> {
    let req: UpdateRequest = json_body(body)?;
    let iri = Iri::new(req.iri).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut dir = state.write().await?;
    let receipt = dir.update(&iri, &req.record).map_err(|e| ApiError::from_directory(e, StatusCode::NOT_FOUND))?;
    Ok(serde_json::to_vec(&receipt).expect("json"))
}

pub async fn schema_body(state: &AppState, class: &str) -> Result<Vec<u8>, ApiError> {
    let dir = state.read().await;
    let spec = dir.form_spec(class).map_err(|e| ApiError::from_directory(e, StatusCode::NOT_FOUND))?;
    Ok(serde_json::to_vec(&spec).expect("json"))
}

fn ok(status: StatusCode, content_type: &'static str, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, content_type)], body).into_response()
}

fn reply(result: Result<Vec<u8>, ApiError>, status: StatusCode, content_type: &'static str) -> Response {
    match result {
        Ok(body) => ok(status, content_type, body),
        Err(e) => e.into_response(),
    }
}

fn body_bytes(body: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    body.map_err(|e| ApiError::new(e.status(), e.body_text()))
}

fn query_param(encoded: &[u8]) -> Result<String, ApiError> {
    form_urlencoded::parse(encoded)
        .find(|(k, _)| k == "query")
        .map(|(_, v)| v.into_owned())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing query parameter"))
}

async fn sparql_get(State(state): State<Shared>, RawQuery(raw): RawQuery) -> Response {
    let text = match query_param(raw.unwrap_or_default().as_bytes()) {
        Ok(t) => t,
        Err(e) => return e.into_response(),
    };
    reply(sparql_body(&state, &text).await, StatusCode::OK, SPARQL_JSON)
}

async fn sparql_post(State(state): State<Shared>, headers: HeaderMap, body: Result<Bytes, BytesRejection>) -> Response {
    let result = async {
        let body = body_bytes(body)?;
        let ctype = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
        let text = if ctype.starts_with("application/x-www-form-urlencoded") {
            query_param(&body)?
        } else if ctype.starts_with("application/sparql-query") {
            String::from_utf8(body.to_vec()).map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "query is not UTF-8"))?
        } else {
            return Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "use application/sparql-query or application/x-www-form-urlencoded",
            ));
        };
        sparql_body(&state, &text).await
    }
    .await;
    reply(result, StatusCode::OK, SPARQL_JSON)
}

async fn search(State(state): State<Shared>, body: Result<Bytes, BytesRejection>) -> Response {
    let result = async { search_body(&state, &body_bytes(body)?).await }.await;
    reply(result, StatusCode::OK, "application/json")
}

async fn register(State(state): State<Shared>, body: Result<Bytes, BytesRejection>) -> Response {
    let result = async { register_body(&state, &body_bytes(body)?).await }.await;
    reply(result, StatusCode::CREATED, "application/json")
}

async fn update(State(state): State<Shared>, body: Result<Bytes, BytesRejection>) -> Response {
    let result = async { update_body(&state, &body_bytes(body)?).await }.await;
    reply(result, StatusCode::OK, "application/json")
}

async fn schema(State(state): State<Shared>, Path(class): Path<String>) -> Response {
    reply(schema_body(&state, &class).await, StatusCode::OK, "application/json")
}

async fn not_found() -> Response {
    ApiError::new(StatusCode::NOT_FOUND, "no such route").into_response()
}

async fn method_not_allowed() -> Response {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method not allowed").into_response()
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sparql", get(sparql_get).post(sparql_post))
        .route("/search", post(search))
        .route("/register", post(register))
        .route("/update", post(update))
        .route("/schema/{class}", get(schema))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

/// Binds `addr` and serves in the background. Port 0 picks a free port.
pub async fn spawn(state: Shared, addr: SocketAddr) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        axum::serve(listener, router(state)).await.expect("server loop");
    });
    Ok((local, handle))
}
