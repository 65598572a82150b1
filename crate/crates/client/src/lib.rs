//! Async client for the flexicia HTTP service.

use futures::{Stream, StreamExt};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use flexicia_api::{
    CommitRequest, CommitResult, CorpusView, DocView, Envelope, Estimate, GraphDump, ImpactRecord,
    Notification, ResolveRequest, ResolveResult, IMPACTS_EVENT,
};

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error envelope.
    #[error("{code}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("unexpected response ({status}): {message}")]
    Decode { status: StatusCode, message: String },
}

impl ClientError {
    /// The envelope's error code, if the service sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

/// Path segments may contain `/`, which must not split the route.
fn segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn call<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&(impl Serialize + ?Sized)>,
    ) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        let envelope: Envelope<T> =
            serde_json::from_str(&text).map_err(|e| ClientError::Decode {
                status,
                message: e.to_string(),
            })?;
        envelope.into_result().map_err(|e| ClientError::Api {
            status,
            code: e.code,
            message: e.message,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call(Method::GET, path, None::<&()>).await
    }

    pub async fn corpus(&self) -> Result<CorpusView, ClientError> {
        self.get("/corpus").await
    }

    pub async fn document(&self, uri: &str) -> Result<DocView, ClientError> {
        self.get(&format!("/doc/{}", segment(uri))).await
    }

    /// Records of one document, or of all documents.
    pub async fn impacts(&self, uri: Option<&str>) -> Result<Vec<ImpactRecord>, ClientError> {
        match uri {
            Some(u) => self.get(&format!("/doc/{}/impacts", segment(u))).await,
            None => self.get("/impacts").await,
        }
    }

    pub async fn commit(
        &self,
        uri: &str,
        source: &str,
        request_cia: bool,
    ) -> Result<CommitResult, ClientError> {
        let body = CommitRequest {
            source: source.to_string(),
            request_cia,
        };
        self.call(
            Method::POST,
            &format!("/doc/{}/commit", segment(uri)),
            Some(&body),
        )
        .await
    }

    pub async fn discard(&self, id: &str) -> Result<ResolveResult, ClientError> {
        self.call(
            Method::POST,
            &format!("/impact/{}/discard", segment(id)),
            None::<&()>,
        )
        .await
    }

    pub async fn resolve(
        &self,
        id: &str,
        source: Option<&str>,
    ) -> Result<ResolveResult, ClientError> {
        let body = ResolveRequest {
            source: source.map(str::to_string),
        };
        self.call(
            Method::POST,
            &format!("/impact/{}/resolve", segment(id)),
            Some(&body),
        )
        .await
    }

    pub async fn estimate(&self, uri: &str, element_id: &str) -> Result<Estimate, ClientError> {
        self.get(&format!(
            "/estimate/{}/{}",
            segment(uri),
            segment(element_id)
        ))
        .await
    }

    pub async fn dump_graph(&self) -> Result<String, ClientError> {
        Ok(self.get::<GraphDump>("/graph").await?.dump)
    }

    /// Impact notifications, optionally limited to some documents. The
    /// stream ends when the server closes the connection.
    pub async fn events(
        &self,
        uris: &[&str],
    ) -> Result<impl Stream<Item = Result<Notification, ClientError>>, ClientError> {
        let query: Vec<(&str, &str)> = uris.iter().map(|u| ("uri", *u)).collect();
        let resp = self
            .http
            .get(format!("{}/events", self.base))
            .query(&query)
            .header(reqwest::header::ACCEPT, "text/event-stream")
            .send()
            .await?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().await?;
            return Err(
                match serde_json::from_str::<Envelope<()>>(&text)
                    .ok()
                    .and_then(|e| e.error)
                {
                    Some(e) => ClientError::Api {
                        status,
                        code: e.code,
                        message: e.message,
                    },
                    None => ClientError::Decode {
                        status,
                        message: text,
                    },
                },
            );
        }
        let bytes = resp.bytes_stream();
        let stream = futures::stream::unfold(
            (bytes, SseParser::default(), Vec::<SseEvent>::new()),
            move |(mut bytes, mut parser, mut pending)| async move {
                loop {
                    if !pending.is_empty() {
                        let ev = pending.remove(0);
                        if ev.event != IMPACTS_EVENT {
                            continue;
                        }
                        let item =
                            serde_json::from_str(&ev.data).map_err(|e| ClientError::Decode {
                                status,
                                message: e.to_string(),
                            });
                        return Some((item, (bytes, parser, pending)));
                    }
                    match bytes.next().await? {
                        Ok(chunk) => pending.extend(parser.push(&chunk)),
                        Err(e) => return Some((Err(e.into()), (bytes, parser, pending))),
                    }
                }
            },
        );
        Ok(stream)
    }
}

/// One dispatched server-sent event.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<String>,
    pub data: String,
}

/// Incremental parser for `text/event-stream` bodies.
#[derive(Debug, Default)]
pub struct SseParser {
    buf: Vec<u8>,
    current: SseEvent,
    has_data: bool,
}

impl SseParser {
    /// Feeds bytes and returns every event completed by them.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<SseEvent> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        while let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
            let mut line: Vec<u8> = self.buf.drain(..=pos).collect();
            line.pop();
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            let line = String::from_utf8_lossy(&line);
            if line.is_empty() {
                let ev = std::mem::take(&mut self.current);
                if std::mem::take(&mut self.has_data) {
                    out.push(SseEvent {
                        event: if ev.event.is_empty() {
                            "message".into()
                        } else {
                            ev.event
                        },
                        ..ev
                    });
                }
                continue;
            }
            if line.starts_with(':') {
                continue;
            }
            let (field, value) = match line.split_once(':') {
                Some((f, v)) => (f, v.strip_prefix(' ').unwrap_or(v)),
                None => (&*line, ""),
            };
            match field {
                "event" => self.current.event = value.to_string(),
                "id" => self.current.id = Some(value.to_string()),
                "data" => {
                    if self.has_data {
                        self.current.data.push('\n');
                    }
                    self.current.data.push_str(value);
                    self.has_data = true;
                }
                _ => {}
            }
        }
        out
    }
}
