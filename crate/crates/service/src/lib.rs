//! HTTP/JSON facade over one [`Broker`]. Every JSON response is an
//! [`Envelope`]; impact notifications go out as server-sent events.

use std::convert::Infallible;
use std::future::Future;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::watch;

use flexicia_api::{codes, CommitRequest, Envelope, GraphDump, ResolveRequest, IMPACTS_EVENT};
use flexicia_core::broker::{Broker, BrokerError, Resolution};

#[derive(Clone)]
pub struct AppState {
    broker: Arc<Mutex<Broker>>,
    /// Flips to true when the server starts shutting down; open event
    /// streams end then so they do not hold the shutdown up.
    closing: watch::Receiver<bool>,
}

impl AppState {
    pub fn new(broker: Broker) -> (Self, watch::Sender<bool>) {
        let (tx, closing) = watch::channel(false);
        let state = AppState {
            broker: Arc::new(Mutex::new(broker)),
            closing,
        };
        (state, tx)
    }

    fn lock(&self) -> MutexGuard<'_, Broker> {
        // a panic inside the broker leaves its files consistent, so a
        // poisoned lock is still usable
        self.broker.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` with the broker on the blocking pool.
    async fn with_broker<T, F>(&self, f: F) -> Result<T, ApiFailure>
    where
        T: Send + 'static,
        F: FnOnce(&mut Broker) -> Result<T, BrokerError> + Send + 'static,
    {
        let broker = self.broker.clone();
        tokio::task::spawn_blocking(move || {
            let mut guard = broker.lock().unwrap_or_else(|e| e.into_inner());
            f(&mut guard)
        })
        .await
        .map_err(|e| ApiFailure::new(StatusCode::INTERNAL_SERVER_ERROR, codes::INTERNAL_ERROR, e))?
        .map_err(ApiFailure::from)
    }
}

/// An error response.
#[derive(Debug)]
pub struct ApiFailure {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiFailure {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        ApiFailure {
            status,
            code: code.to_string(),
            message: message.to_string(),
        }
    }
}

impl From<BrokerError> for ApiFailure {
    fn from(e: BrokerError) -> Self {
        let status = match &e {
            BrokerError::Parse { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            BrokerError::UnknownDocument(_)
            | BrokerError::UnknownElement { .. }
            | BrokerError::UnknownImpact(_) => StatusCode::NOT_FOUND,
            BrokerError::ImpactClosed { .. } | BrokerError::Locked(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiFailure::new(status, e.code(), e)
    }
}

impl From<JsonRejection> for ApiFailure {
    fn from(e: JsonRejection) -> Self {
        ApiFailure::new(StatusCode::BAD_REQUEST, codes::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(Envelope::<()>::failure(self.code, self.message)),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<Envelope<T>>, ApiFailure>;

fn ok<T: Serialize>(data: T) -> ApiResult<T> {
    Ok(Json(Envelope::success(data)))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/corpus", get(corpus))
        .route("/doc/{uri}", get(document))
        .route("/doc/{uri}/impacts", get(doc_impacts))
        .route("/doc/{uri}/commit", post(commit))
        .route("/impacts", get(all_impacts))
        .route("/impact/{id}/discard", post(discard))
        .route("/impact/{id}/resolve", post(resolve))
        .route("/estimate/{uri}/{element_id}", get(estimate))
        .route("/graph", get(graph))
        .route("/events", get(events))
        .fallback(|| async {
            ApiFailure::new(StatusCode::NOT_FOUND, codes::NOT_FOUND, "no such route")
        })
        .layer(middleware::from_fn(negotiate))
        .with_state(state)
}

/// Serves until `shutdown` completes.
pub async fn serve(
    listener: TcpListener,
    broker: Broker,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, root = %broker.root().display(), "serving");
    let (state, closing) = AppState::new(broker);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            shutdown.await;
            let _ = closing.send(true);
        })
        .await
}

/// Rejects requests whose `Accept` header rules out what we produce.
async fn negotiate(req: Request, next: Next) -> Response {
    let produced: &[&str] = if req.uri().path() == "/events" {
        &["text/event-stream"]
    } else {
        &["application/json"]
    };
    if accepts(req.headers(), produced) {
        next.run(req).await
    } else {
        ApiFailure::new(
            StatusCode::NOT_ACCEPTABLE,
            codes::NOT_ACCEPTABLE,
            format!("this resource is only available as {}", produced.join(", ")),
        )
        .into_response()
    }
}

fn accepts(headers: &HeaderMap, produced: &[&str]) -> bool {
    let Some(accept) = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()) else {
        return true;
    };
    accept.split(',').any(|range| {
        let mut parts = range.split(';');
        let media = parts.next().unwrap_or("").trim();
        let refused = parts.any(|p| matches!(p.trim(), "q=0" | "q=0.0" | "q=0.00" | "q=0.000"));
        !refused
            && produced.iter().any(|p| {
                let (ty, _) = p.split_once('/').expect("media type");
                media == "*/*" || media == *p || media == format!("{ty}/*")
            })
    })
}

async fn corpus(State(s): State<AppState>) -> ApiResult<flexicia_api::CorpusView> {
    ok(s.lock().corpus())
}

async fn document(
    State(s): State<AppState>,
    Path(uri): Path<String>,
) -> ApiResult<flexicia_api::DocView> {
    ok(s.lock().view(&uri)?)
}

async fn doc_impacts(
    State(s): State<AppState>,
    Path(uri): Path<String>,
) -> ApiResult<Vec<flexicia_api::ImpactRecord>> {
    ok(s.lock().impacts(Some(&uri))?)
}

async fn all_impacts(State(s): State<AppState>) -> ApiResult<Vec<flexicia_api::ImpactRecord>> {
    ok(s.lock().impacts(None)?)
}

async fn commit(
    State(s): State<AppState>,
    Path(uri): Path<String>,
    body: Result<Json<CommitRequest>, JsonRejection>,
) -> ApiResult<flexicia_api::CommitResult> {
    let Json(req) = body?;
    ok(
        s.with_broker(move |b| b.commit(&uri, &req.source, req.request_cia))
            .await?,
    )
}

async fn discard(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<flexicia_api::ResolveResult> {
    ok(
        s.with_broker(move |b| b.resolve(&id, Resolution::Discard, None))
            .await?,
    )
}

/// The body is optional; an empty one resolves without new source.
async fn resolve(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<flexicia_api::ResolveResult> {
    let req: ResolveRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ResolveRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiFailure::new(StatusCode::BAD_REQUEST, codes::BAD_REQUEST, e))?
    };
    ok(
        s.with_broker(move |b| b.resolve(&id, Resolution::Resolve, req.source.as_deref()))
            .await?,
    )
}

async fn estimate(
    State(s): State<AppState>,
    Path((uri, element_id)): Path<(String, String)>,
) -> ApiResult<flexicia_api::Estimate> {
    ok(s.lock().estimate(&uri, &element_id)?)
}

async fn graph(State(s): State<AppState>) -> ApiResult<GraphDump> {
    ok(GraphDump {
        dump: s.lock().dump_graph(),
    })
}

/// `?uri=a&uri=b` restricts the stream to those documents.
async fn events(
    State(s): State<AppState>,
    Query(params): Query<Vec<(String, String)>>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let filter: Vec<String> = params
        .into_iter()
        .filter(|(k, _)| k == "uri")
        .flat_map(|(_, v)| v.split(',').map(str::to_string).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .collect();
    let rx = s.lock().subscribe();
    let closing = s.closing.clone();
    let stream = futures::stream::unfold(
        (rx, filter, closing),
        |(mut rx, filter, mut closing)| async move {
            loop {
                if *closing.borrow() {
                    return None;
                }
                let received = tokio::select! {
                    r = rx.recv() => r,
                    _ = closing.changed() => return None,
                };
                match received {
                    Ok(n) if n.matches(&filter) => {
                        let event = Event::default()
                            .event(IMPACTS_EVENT)
                            .id(n.corpus_version.to_string())
                            .json_data(&n)
                            .expect("notifications serialize");
                        return Some((Ok(event), (rx, filter, closing)));
                    }
                    Ok(_) => {}
                    Err(RecvError::Lagged(missed)) => {
                        tracing::warn!(missed, "event subscriber lagged");
                    }
                    Err(RecvError::Closed) => return None,
                }
            }
        },
    );
    Sse::new(stream).keep_alive(KeepAlive::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::http::HeaderValue;

    fn accept(v: &str) -> HeaderMap {
        let mut h = HeaderMap::new();
        h.insert(header::ACCEPT, HeaderValue::from_str(v).unwrap());
        h
    }

    #[test]
    fn accept_matching() {
        let json = &["application/json"];
        assert!(accepts(&HeaderMap::new(), json));
        assert!(accepts(&accept("*/*"), json));
        assert!(accepts(&accept("text/html, application/*;q=0.5"), json));
        assert!(!accepts(&accept("text/html"), json));
        assert!(!accepts(&accept("application/json;q=0"), json));
        assert!(accepts(
            &accept("text/event-stream"),
            &["text/event-stream"]
        ));
    }
}
