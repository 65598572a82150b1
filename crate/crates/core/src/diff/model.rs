use std::collections::BTreeMap;

use thiserror::Error;

use crate::doc::ElementKind;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// Matching parameters for one element kind.
#[derive(Debug, Clone, PartialEq)]
pub struct KindModel {
    /// Attributes that identify an element among same-kind siblings when
    /// it has no `xml:id` match.
    pub keys: Vec<String>,
    /// Minimum text similarity for a match by content.
    pub threshold: f64,
    /// Whether leftover elements may be paired by sibling position.
    pub position: bool,
}

impl Default for KindModel {
    fn default() -> Self {
        KindModel {
            keys: Vec::new(),
            threshold: DEFAULT_THRESHOLD,
            position: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: expected `Kind.setting = value`")]
    Malformed { line: usize },
    #[error("line {line}: unknown element kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: unknown setting `{setting}`")]
    UnknownSetting { line: usize, setting: String },
    #[error("line {line}: invalid value `{value}`")]
    InvalidValue { line: usize, value: String },
}

/// Per-kind matching parameters. `xml:id` equality always takes precedence
/// over everything configured here.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    kinds: BTreeMap<ElementKind, KindModel>,
}

impl Default for SimilarityModel {
    fn default() -> Self {
        let mut kinds = BTreeMap::new();
        for k in ElementKind::ALL {
            kinds.insert(k, KindModel::default());
        }
        let keys: [(ElementKind, &[&str]); 9] = [
            (ElementKind::Term, &["cd", "name"]),
            (ElementKind::Imports, &["from"]),
            (ElementKind::Premise, &["uri", "ref"]),
            (ElementKind::Symbol, &["name"]),
            (ElementKind::Definition, &["for"]),
            (ElementKind::Omtext, &["type"]),
            (ElementKind::Assertion, &["type"]),
            (ElementKind::Proof, &["for"]),
            (ElementKind::Justification, &["method"]),
        ];
        for (k, ks) in keys {
            kinds.get_mut(&k).expect("all kinds present").keys =
                ks.iter().map(|s| s.to_string()).collect();
        }
        SimilarityModel { kinds }
    }
}

impl SimilarityModel {
    pub fn kind(&self, k: ElementKind) -> &KindModel {
        &self.kinds[&k]
    }

    pub fn kind_mut(&mut self, k: ElementKind) -> &mut KindModel {
        self.kinds.entry(k).or_default()
    }

    /// Parses `Kind.setting = value` lines on top of the default model.
    /// Kinds are element tags or type names; `*` addresses every kind.
    /// Settings: `keys` (comma separated), `threshold` (0..1), `position`
    /// (true/false). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut m = SimilarityModel::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let (lhs, value) = l.split_once('=').ok_or(ModelError::Malformed { line })?;
            let (kind, setting) = lhs
                .trim()
                .rsplit_once('.')
                .ok_or(ModelError::Malformed { line })?;
            let value = value.trim();
            let targets: Vec<ElementKind> = match kind.trim() {
                "*" => ElementKind::ALL.to_vec(),
                k => vec![ElementKind::from_type_name(k)
                    .or_else(|| ElementKind::from_tag(k))
                    .ok_or_else(|| ModelError::UnknownKind {
                        line,
                        kind: k.to_string(),
                    })?],
            };
            let invalid = || ModelError::InvalidValue {
                line,
                value: value.to_string(),
            };
            for k in targets {
                let km = m.kind_mut(k);
                match setting.trim() {
                    "keys" => {
                        km.keys = value
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect()
                    }
                    "threshold" => {
                        let t: f64 = value.parse().map_err(|_| invalid())?;
                        if !(0.0..=1.0).contains(&t) {
                            return Err(invalid());
                        }
                        km.threshold = t;
                    }
                    "position" => km.position = value.parse().map_err(|_| invalid())?,
                    other => {
                        return Err(ModelError::UnknownSetting {
                            line,
                            setting: other.to_string(),
                        })
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Longest-common-subsequence ratio over whitespace-separated tokens:
/// `2·|lcs| / (|a| + |b|)`, and 1 for two empty texts.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * lcs_len(&a, &b) as f64 / (a.len() + b.len()) as f64
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y {
                diag + 1
            } else {
                row[j + 1].max(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}
