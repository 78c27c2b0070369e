//! JSON-over-HTTP elicitation sessions.
//!
//! A facilitator opens a session on a model, records each expert's
//! quantiles row by row, sets the consensus value, watches the query
//! results move and finally exports a model file.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | body is a model document |
//! | GET | `/sessions/{id}` | row statuses |
//! | PUT | `/sessions/{id}/rows/{rowKey}/judgements/{expert}` | `{q05, best, q95}` |
//! | PUT | `/sessions/{id}/rows/{rowKey}/consensus` | `{q05, best, q95}` |
//! | GET | `/sessions/{id}/preview` | exact queries on the current values |
//! | POST | `/sessions/{id}/export` | model document, 409 while rows are pending |
//!
//! Every route except creation needs `Authorization: Bearer <token>` with the
//! token returned at creation. Row keys are `node|parent=cat,...|category`,
//! percent-encoded in the path.

pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pathwise_core::beta::beta_pdf;
use pathwise_core::{ElicitedTriple, FitReport, ModelFileError, Objective, RowFit};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

pub use store::{Event, Preview, RowState, RowStatus, Session, SessionError, SessionStore};

pub const SCHEMA_HEADER: &str = "x-pathwise-schema";
pub const SESSION_SCHEMA: &str = "pathwise-session/1";

/// Points in the fitted density returned with each judgement.
pub const DENSITY_POINTS: usize = 400;

/// Judgement previews show the least-squares fit on the quantile scale, the
/// one that reads directly against the expert's three numbers.
pub const PREVIEW_FIT: RowFit = RowFit::ThreePoint(Objective::Quantile);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": error, "message": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("error detail serializes");
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Model(ModelFileError::Validation(v)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-model", message).with("violations", v)
            }
            SessionError::Model(ModelFileError::Parse { line, column, .. }) => {
                ApiError::new(StatusCode::BAD_REQUEST, "parse", message)
                    .with("line", line)
                    .with("column", column)
            }
            SessionError::Model(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-model", message),
            SessionError::UnknownRow(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown-row", message).with("field", "rowKey")
            }
            SessionError::Triple { field, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-triple", message).with("field", field)
            }
            SessionError::Conflict { violations, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "row-conflict", message)
                    .with("field", "best")
                    .with("violations", violations)
            }
            SessionError::InvalidExpert => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-expert", message).with("field", "expert")
            }
            SessionError::Pending(rows) => ApiError::new(StatusCode::CONFLICT, "pending", message).with("pending", rows),
            SessionError::Query(_) | SessionError::Io { .. } | SessionError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
struct RowView<'a> {
    key: &'a str,
    status: RowStatus,
    default: ElicitedTriple,
    judgements: &'a std::collections::BTreeMap<String, ElicitedTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consensus: Option<ElicitedTriple>,
}

fn row_view(r: &RowState) -> RowView<'_> {
    RowView {
        key: &r.key,
        status: r.status(),
        default: r.default,
        judgements: &r.judgements,
        consensus: r.consensus,
    }
}

fn snapshot(s: &Session) -> Value {
    let pending = s.pending();
    json!({
        "id": s.id,
        "rows": s.rows().iter().map(row_view).collect::<Vec<_>>(),
        "exportable": pending.is_empty(),
        "pending": pending,
    })
}

/// Field-by-field triple extraction so a bad body names the offending field.
fn triple_from(body: &Value) -> ApiResult<ElicitedTriple> {
    let field = |name: &str| {
        body.get(name).and_then(Value::as_f64).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid-triple",
                format!("{name}: expected a number"),
            )
            .with("field", name)
        })
    };
    Ok(ElicitedTriple::new(field("q05")?, field("best")?, field("q95")?))
}

fn parse_body(bytes: &[u8]) -> ApiResult<Value> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "parse", e.to_string())
            .with("line", e.line())
            .with("column", e.column())
    })
}

/// Fitted beta density on the midpoints of an even grid over [0, 1].
pub fn fitted_density(fit: &FitReport, points: usize) -> Vec<[f64; 2]> {
    (0..points)
        .map(|i| {
            let x = (i as f64 + 0.5) / points as f64;
            [x, beta_pdf(fit.params, x)]
        })
        .collect()
}

async fn authorised(store: &SessionStore, id: &str, headers: &HeaderMap) -> ApiResult<Arc<Mutex<Session>>> {
    let session = store
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session `{id}`")))?;
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let ok = match token {
        Some(t) => session.lock().await.token_matches(t.trim()),
        None => false,
    };
    if !ok {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorised",
            "a valid bearer token for this session is required",
        ));
    }
    Ok(session)
}

async fn create(State(store): State<Arc<SessionStore>>, body: axum::body::Bytes) -> ApiResult<impl IntoResponse> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "parse", "body is not UTF-8"))?;
    let (id, token, session) = store.create(text)?;
    let mut view = snapshot(&*session.lock().await);
    view["token"] = Value::from(token);
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, format!("/sessions/{id}"))],
        Json(view),
    ))
}

async fn show(State(store): State<Arc<SessionStore>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let session = authorised(&store, &id, &headers).await?;
    let s = session.lock().await;
    Ok(Json(snapshot(&s)))
}

async fn judgement(
    State(store): State<Arc<SessionStore>>,
    Path((id, row, expert)): Path<(String, String, String)>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let session = authorised(&store, &id, &headers).await?;
    let triple = triple_from(&parse_body(&body)?)?;
    store::check_triple(&triple)?;
    let mut s = session.lock().await;
    s.row(&row)?;
    let fit = PREVIEW_FIT.fit(&triple).map_err(|e| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "fit-failed", e.to_string()).with("field", "triple")
    })?;
    let state = s.submit_judgement(&row, &expert, triple)?;
    Ok(Json(json!({
        "row": row_view(state),
        "expert": expert,
        "fit": fit,
        "density": fitted_density(&fit, DENSITY_POINTS),
    })))
}

async fn consensus(
    State(store): State<Arc<SessionStore>>,
    Path((id, row)): Path<(String, String)>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let session = authorised(&store, &id, &headers).await?;
    let triple = triple_from(&parse_body(&body)?)?;
    let mut s = session.lock().await;
    let state = s.set_consensus(&row, triple)?;
    Ok(Json(json!({ "row": row_view(state) })))
}

async fn preview(State(store): State<Arc<SessionStore>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<Preview>> {
    let session = authorised(&store, &id, &headers).await?;
    let s = session.lock().await;
    Ok(Json(s.preview()?))
}

async fn export(State(store): State<Arc<SessionStore>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let session = authorised(&store, &id, &headers).await?;
    let text = session.lock().await.export()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

/// Rejects requests declaring another schema and stamps every response.
async fn schema_version(request: Request, next: Next) -> Response {
    if let Some(v) = request.headers().get(SCHEMA_HEADER) {
        if v.as_bytes() != SESSION_SCHEMA.as_bytes() {
            let err = ApiError::new(
                StatusCode::BAD_REQUEST,
                "schema",
                format!("unsupported schema {:?}, this server speaks {SESSION_SCHEMA}", v),
            );
            let mut r = err.into_response();
            r.headers_mut().insert(SCHEMA_HEADER, HeaderValue::from_static(SESSION_SCHEMA));
            return r;
        }
    }
    let mut response = next.run(request).await;
    response
        .headers_mut()
        .insert(SCHEMA_HEADER, HeaderValue::from_static(SESSION_SCHEMA));
    response
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/rows/{row}/judgements/{expert}", put(judgement))
        .route("/sessions/{id}/rows/{row}/consensus", put(consensus))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/export", post(export))
        .layer(middleware::from_fn(schema_version))
        .with_state(store)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] SessionError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Replays the logs in `dir` and serves until interrupted.
pub async fn serve(addr: SocketAddr, dir: PathBuf) -> Result<(), ServeError> {
    let store = Arc::new(SessionStore::open(dir)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
