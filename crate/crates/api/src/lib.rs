//! Request and response payloads of the HTTP interface. Response bodies
//! are always an [`Envelope`]; the `data` payloads are the broker's own
//! result types.

use serde::{Deserialize, Serialize};

pub use flexicia_core::broker::{
    Affected, CommitResult, CorpusView, DocSummary, DocView, Estimate, IdSpan, ImpactRecord,
    ImpactStatus, IngestReport, Notification, Policy, ResolveResult, SourceKind,
};

/// Error codes besides the broker's own (`BrokerError::code`).
pub mod codes {
    pub const PARSE_ERROR: &str = "PARSE_ERROR";
    pub const UNKNOWN_DOCUMENT: &str = "UNKNOWN_DOCUMENT";
    pub const UNKNOWN_ELEMENT: &str = "UNKNOWN_ELEMENT";
    pub const UNKNOWN_IMPACT: &str = "UNKNOWN_IMPACT";
    pub const IMPACT_CLOSED: &str = "IMPACT_CLOSED";
    pub const BAD_REQUEST: &str = "BAD_REQUEST";
    pub const NOT_FOUND: &str = "NOT_FOUND";
    pub const NOT_ACCEPTABLE: &str = "NOT_ACCEPTABLE";
    pub const INTERNAL_ERROR: &str = "INTERNAL_ERROR";
}

/// Server-sent event name for impact notifications.
pub const IMPACTS_EVENT: &str = "impacts";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

/// Exactly one of `data` and `error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Envelope<T> {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

impl<T> Envelope<T> {
    pub fn success(data: T) -> Self {
        Envelope {
            ok: true,
            data: Some(data),
            error: None,
        }
    }

    pub fn failure(code: impl Into<String>, message: impl Into<String>) -> Self {
        Envelope {
            ok: false,
            data: None,
            error: Some(ApiError {
                code: code.into(),
                message: message.into(),
            }),
        }
    }

    pub fn into_result(self) -> Result<T, ApiError> {
        match (self.ok, self.data, self.error) {
            (true, Some(d), _) => Ok(d),
            (_, _, Some(e)) => Err(e),
            (ok, _, None) => Err(ApiError {
                code: codes::INTERNAL_ERROR.into(),
                message: format!("malformed envelope (ok={ok}, no payload)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRequest {
    pub source: String,
    /// Run the analysis even under the manual policy.
    #[serde(default, rename = "requestCIA")]
    pub request_cia: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Debug dump of the semantic graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub dump: String,
}
