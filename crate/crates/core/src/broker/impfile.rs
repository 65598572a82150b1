//! The `.imp` impact file format.
//!
//! ```xml
//! <impacts for-document="X.omdoc" corpus-version="N">
//!   <impact id="imp-7" for="x.lemma" status="open" name="..." caused-by="imp-3"/>
//! </impacts>
//! ```
//!
//! `id`, `status`, `caused-by` and both `corpus-version` attributes are
//! bookkeeping of this implementation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::escape_into;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactStatus {
    Open,
    Discarded,
    Resolved,
}

impl ImpactStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ImpactStatus::Open => "open",
            ImpactStatus::Discarded => "discarded",
            ImpactStatus::Resolved => "resolved",
        }
    }
}

impl fmt::Display for ImpactStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImpactStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(ImpactStatus::Open),
            "discarded" => Ok(ImpactStatus::Discarded),
            "resolved" => Ok(ImpactStatus::Resolved),
            other => Err(format!("unknown impact status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImpactRecord {
    pub id: String,
    /// Document the impact is filed under.
    pub uri: String,
    /// Id of the impacted element.
    #[serde(rename = "for")]
    pub target: String,
    pub name: String,
    pub status: ImpactStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caused_by: Option<String>,
    pub corpus_version: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ImpFileError {
    #[error("malformed impact file: {0}")]
    Xml(String),
    #[error("impact file: {0}")]
    Invalid(String),
}

fn attr(out: &mut String, key: &str, value: &str) {
    out.push(' ');
    out.push_str(key);
    out.push_str("=\"");
    escape_into(value, true, out);
    out.push('"');
}

pub fn write_imp(for_document: &str, corpus_version: u64, records: &[ImpactRecord]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<impacts");
    attr(&mut out, "for-document", for_document);
    attr(&mut out, "corpus-version", &corpus_version.to_string());
    if records.is_empty() {
        out.push_str("/>\n");
        return out;
    }
    out.push_str(">\n");
    for r in records {
        out.push_str("  <impact");
        attr(&mut out, "id", &r.id);
        attr(&mut out, "for", &r.target);
        attr(&mut out, "status", r.status.as_str());
        attr(&mut out, "name", &r.name);
        if let Some(c) = &r.caused_by {
            attr(&mut out, "caused-by", c);
        }
        attr(&mut out, "corpus-version", &r.corpus_version.to_string());
        out.push_str("/>\n");
    }
    out.push_str("</impacts>\n");
    out
}

/// Reads an impact file; records are filed under `uri`.
pub fn read_imp(uri: &str, text: &str) -> Result<(u64, Vec<ImpactRecord>), ImpFileError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ImpFileError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "impacts" {
        return Err(ImpFileError::Invalid(format!(
            "root element is <{}>",
            root.tag_name().name()
        )));
    }
    let version = |n: roxmltree::Node<'_, '_>| -> Result<u64, ImpFileError> {
        n.attribute("corpus-version")
            .unwrap_or("0")
            .parse()
            .map_err(|_| ImpFileError::Invalid("corpus-version is not a number".into()))
    };
    let corpus_version = version(root)?;
    let mut records = Vec::new();
    for n in root.children().filter(|n| n.is_element()) {
        if n.tag_name().name() != "impact" {
            return Err(ImpFileError::Invalid(format!(
                "unexpected <{}>",
                n.tag_name().name()
            )));
        }
        let req = |k: &str| {
            n.attribute(k)
                .map(str::to_string)
                .ok_or_else(|| ImpFileError::Invalid(format!("impact without `{k}`")))
        };
        records.push(ImpactRecord {
            id: req("id")?,
            uri: uri.to_string(),
            target: req("for")?,
            name: req("name")?,
            status: req("status")?.parse().map_err(ImpFileError::Invalid)?,
            caused_by: n.attribute("caused-by").map(str::to_string),
            corpus_version: version(n)?,
        });
    }
    Ok((corpus_version, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = ImpactRecord {
            id: "imp-7".into(),
            uri: "x".into(),
            target: "x.lemma".into(),
            name: "a \"quoted\" <name>".into(),
            status: ImpactStatus::Open,
            caused_by: Some("imp-3".into()),
            corpus_version: 4,
        };
        let text = write_imp("x.omdoc", 5, std::slice::from_ref(&r));
        assert!(text.contains("for-document=\"x.omdoc\""));
        assert_eq!(read_imp("x", &text).unwrap(), (5, vec![r]));
        assert_eq!(
            read_imp("x", &write_imp("x.omdoc", 1, &[])).unwrap(),
            (1, vec![])
        );
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_imp("x", "<impacts><impact id=\"a\"/></impacts>").is_err());
        assert!(read_imp("x", "<other/>").is_err());
        assert!(read_imp("x", "<impacts").is_err());
    }
}
