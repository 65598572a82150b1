//! The document broker: owns a corpus directory, accepts commits, runs
//! the analysis according to the policy and keeps the impact lists.
//!
//! Layout of a corpus directory:
//!
//! ```text
//! X.tex | X.omdoc     document source (a .tex source also gets a
//!                     generated sibling X.omdoc)
//! X.imp               impacts filed under X
//! corpus.map          optional path macro mapping for sTeX imports
//! .flexicia/state.json  documents, versions and the semantic graph
//! .flexicia/journal     one line per accepted version
//! .flexicia/lock        held while a broker has the corpus open
//! ```

mod impfile;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::cia::{self, SyncError};
use crate::diff::SimilarityModel;
use crate::doc::{id_spans, parse_omdoc, serialize_omdoc, DocError, Document};
use crate::graph::{GraphError, GraphSnapshot, TypedGraph};
use crate::metamodel;
use crate::rewrite::{RuleError, RuleSet};
use crate::stex::{count_semantic_references, parse_stex_with, StexOptions};

pub use impfile::{read_imp, write_imp, ImpFileError, ImpactRecord, ImpactStatus};

pub const STATE_DIR: &str = ".flexicia";
const STATE_FILE: &str = "state.json";
const JOURNAL_FILE: &str = "journal";
const LOCK_FILE: &str = "lock";
pub const MAPPING_FILE: &str = "corpus.map";

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("{0} is not an initialised corpus (run ingest first)")]
    NotInitialized(PathBuf),
    #[error("corpus {0} is in use by another process")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse `{uri}`: {message}")]
    Parse { uri: String, message: String },
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("no analysable element `{id}` in `{uri}`")]
    UnknownElement { uri: String, id: String },
    #[error("unknown impact `{0}`")]
    UnknownImpact(String),
    #[error("impact `{id}` is already {status}")]
    ImpactClosed { id: String, status: ImpactStatus },
    #[error("corpus state is corrupt: {0}")]
    State(String),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl BrokerError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::NotInitialized(_) => "NOT_INITIALIZED",
            BrokerError::Locked(_) => "LOCKED",
            BrokerError::Io { .. } => "IO_ERROR",
            BrokerError::Parse { .. } => "PARSE_ERROR",
            BrokerError::UnknownDocument(_) => "UNKNOWN_DOCUMENT",
            BrokerError::UnknownElement { .. } => "UNKNOWN_ELEMENT",
            BrokerError::UnknownImpact(_) => "UNKNOWN_IMPACT",
            BrokerError::ImpactClosed { .. } => "IMPACT_CLOSED",
            BrokerError::State(_) => "STATE_ERROR",
            BrokerError::Rules(_) => "RULE_ERROR",
            BrokerError::Sync(_) | BrokerError::Graph(_) => "INTERNAL_ERROR",
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BrokerError + '_ {
    move |source| BrokerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Analyse after every commit.
    #[default]
    Eager,
    /// Analyse only when the commit asks for it.
    Manual,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Eager => "eager",
            Policy::Manual => "manual",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eager" => Ok(Policy::Eager),
            "manual" => Ok(Policy::Manual),
            other => Err(format!("unknown policy `{other}` (eager|manual)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Stex,
    Omdoc,
}

impl SourceKind {
    pub fn extension(self) -> &'static str {
        match self {
            SourceKind::Stex => "tex",
            SourceKind::Omdoc => "omdoc",
        }
    }

    fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "tex" => Some(SourceKind::Stex),
            "omdoc" => Some(SourceKind::Omdoc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BrokerConfig {
    /// Overrides the policy stored with the corpus.
    pub policy: Option<Policy>,
    /// Rule files loaded after the bundled packs.
    pub extra_rules: Vec<String>,
    /// Per-phase rewrite budget; the packs' own limits when absent.
    pub max_rewrites: Option<u64>,
    pub model: SimilarityModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocState {
    kind: SourceKind,
    version: u64,
    document: Document,
}

#[derive(Debug, Serialize, Deserialize)]
struct State {
    corpus_version: u64,
    policy: Policy,
    documents: BTreeMap<String, DocState>,
    graph: GraphSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub documents: usize,
    pub references: usize,
    pub semantic_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocSummary {
    pub uri: String,
    pub kind: SourceKind,
    pub version: u64,
    pub open_impacts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusView {
    pub corpus_version: u64,
    pub policy: Policy,
    pub open_impacts: usize,
    pub documents: Vec<DocSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdSpan {
    pub id: String,
    /// Byte offset into the source.
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocView {
    pub uri: String,
    pub kind: SourceKind,
    pub version: u64,
    pub source: String,
    /// Where each element id sits in the source.
    pub ids: Vec<IdSpan>,
    pub impacts: Vec<ImpactRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitResult {
    pub uri: String,
    pub version: u64,
    pub corpus_version: u64,
    /// Length of the edit script between the stored and the new version.
    pub edit_ops: usize,
    pub cia: bool,
    /// False when the analysis ran but failed; the commit is kept.
    pub impacts_available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cia_error: Option<String>,
    pub new_impacts: Vec<ImpactRecord>,
    /// Open impacts per document after the commit.
    pub impacts: BTreeMap<String, Vec<ImpactRecord>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Affected {
    pub uri: String,
    pub element_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Estimate {
    pub uri: String,
    pub element_id: String,
    /// Number of semantic objects depending on the element.
    pub count: usize,
    pub affected: Vec<Affected>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Discard,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolveResult {
    /// Every record whose status changed.
    pub updated: Vec<ImpactRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit: Option<CommitResult>,
}

/// Impacts newly opened on one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Notification {
    pub uri: String,
    pub corpus_version: u64,
    pub impacts: Vec<ImpactRecord>,
}

impl Notification {
    /// An empty filter accepts every document.
    pub fn matches(&self, filter: &[String]) -> bool {
        filter.is_empty() || filter.iter().any(|f| f == &self.uri)
    }
}

pub struct Broker {
    root: PathBuf,
    _lock: File,
    rules: RuleSet,
    model: SimilarityModel,
    options: StexOptions,
    policy: Policy,
    corpus_version: u64,
    docs: BTreeMap<String, DocState>,
    graph: TypedGraph,
    impacts: BTreeMap<String, Vec<ImpactRecord>>,
    next_impact: u64,
    events: broadcast::Sender<Notification>,
}

fn load_rules(config: &BrokerConfig) -> Result<RuleSet, BrokerError> {
    let mut rules = metamodel::load_rules(config.extra_rules.iter().map(String::as_str))?;
    if let Some(max) = config.max_rewrites {
        rules.set_budget(max);
    }
    Ok(rules)
}

fn lock(root: &Path) -> Result<File, BrokerError> {
    let dir = root.join(STATE_DIR);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let path = dir.join(LOCK_FILE);
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(io(&path))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(fs::TryLockError::WouldBlock) => Err(BrokerError::Locked(root.to_path_buf())),
        Err(fs::TryLockError::Error(e)) => Err(io(&path)(e)),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), BrokerError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

/// Splits `name.ext` into the document uri and the source kind.
pub fn split_uri(name: &str) -> (String, Option<SourceKind>) {
    if let Some((stem, ext)) = name.rsplit_once('.') {
        if let Some(kind) = SourceKind::from_extension(ext) {
            return (stem.to_string(), Some(kind));
        }
    }
    (name.to_string(), None)
}

fn scan(root: &Path) -> Result<BTreeMap<String, SourceKind>, BrokerError> {
    fn walk(
        root: &Path,
        dir: &Path,
        out: &mut BTreeMap<String, SourceKind>,
    ) -> Result<(), BrokerError> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(io(dir))?
            .collect::<Result<_, _>>()
            .map_err(io(dir))?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("inside root")
                .to_string_lossy()
                .replace('\\', "/");
            if let (uri, Some(kind)) = split_uri(&rel) {
                // a .tex source wins over its generated .omdoc
                let slot = out.entry(uri).or_insert(kind);
                if kind == SourceKind::Stex {
                    *slot = kind;
                }
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

impl Broker {
    /// Builds a fresh corpus state from the sources in `root`, replacing
    /// any previous state and impact lists.
    pub fn ingest(
        root: &Path,
        config: BrokerConfig,
    ) -> Result<(Broker, IngestReport), BrokerError> {
        let lock = lock(root)?;
        let rules = load_rules(&config)?;
        let options = read_mapping(root)?;
        let mut docs = BTreeMap::new();
        for (uri, kind) in scan(root)? {
            let path = root.join(format!("{uri}.{}", kind.extension()));
            let src = fs::read_to_string(&path).map_err(io(&path))?;
            let document = parse_source(&uri, kind, &src, &options)?;
            docs.insert(
                uri,
                DocState {
                    kind,
                    version: 1,
                    document,
                },
            );
        }
        let mut graph = TypedGraph::new(metamodel::schema());
        for d in docs.values() {
            cia::encode_document(&mut graph, &d.document)?;
        }
        let (tx, _) = broadcast::channel(256);
        let mut broker = Broker {
            root: root.to_path_buf(),
            _lock: lock,
            rules,
            model: config.model,
            options,
            policy: config.policy.unwrap_or_default(),
            corpus_version: 1,
            docs,
            graph,
            impacts: BTreeMap::new(),
            next_impact: 1,
            events: tx,
        };
        let analysis = cia::analyze(&mut broker.graph, &broker.rules)
            .map_err(|e| BrokerError::State(format!("initial analysis failed: {e}")))?;
        broker.table(&analysis.impacts);
        let references = broker
            .docs
            .values()
            .map(|d| count_semantic_references(&d.document))
            .sum();
        for uri in broker.docs.keys().cloned().collect::<Vec<_>>() {
            broker.write_generated(&uri)?;
        }
        broker.write_all_imp()?;
        broker.save_state()?;
        broker.journal("ingest", "*")?;
        let report = IngestReport {
            documents: broker.docs.len(),
            references,
            semantic_nodes: cia::status_counts(&broker.graph).values().sum(),
        };
        Ok((broker, report))
    }

    /// Opens a corpus previously set up by [`Broker::ingest`].
    pub fn open(root: &Path, config: BrokerConfig) -> Result<Broker, BrokerError> {
        let state_path = root.join(STATE_DIR).join(STATE_FILE);
        if !state_path.exists() {
            return Err(BrokerError::NotInitialized(root.to_path_buf()));
        }
        let lock = lock(root)?;
        let rules = load_rules(&config)?;
        let options = read_mapping(root)?;
        let text = fs::read_to_string(&state_path).map_err(io(&state_path))?;
        let state: State =
            serde_json::from_str(&text).map_err(|e| BrokerError::State(e.to_string()))?;
        let graph = TypedGraph::from_snapshot(metamodel::schema(), state.graph)
            .map_err(|e| BrokerError::State(e.to_string()))?;
        let mut impacts = BTreeMap::new();
        let mut next_impact = 1;
        for uri in state.documents.keys() {
            let path = root.join(format!("{uri}.imp"));
            let records = match fs::read_to_string(&path) {
                Ok(text) => {
                    read_imp(uri, &text)
                        .map_err(|e| BrokerError::State(format!("{}: {e}", path.display())))?
                        .1
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(e) => return Err(io(&path)(e)),
            };
            for r in &records {
                if let Some(n) =
                    r.id.strip_prefix("imp-")
                        .and_then(|n| n.parse::<u64>().ok())
                {
                    next_impact = next_impact.max(n + 1);
                }
            }
            impacts.insert(uri.clone(), records);
        }
        let (tx, _) = broadcast::channel(256);
        Ok(Broker {
            root: root.to_path_buf(),
            _lock: lock,
            rules,
            model: config.model,
            options,
            policy: config.policy.unwrap_or(state.policy),
            corpus_version: state.corpus_version,
            docs: state.documents,
            graph,
            impacts,
            next_impact,
            events: tx,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn corpus_version(&self) -> u64 {
        self.corpus_version
    }

    pub fn graph(&self) -> &TypedGraph {
        &self.graph
    }

    /// Debug dump of the semantic graph.
    pub fn dump_graph(&self) -> String {
        self.graph.dump()
    }

    pub fn document(&self, uri: &str) -> Option<&Document> {
        self.docs.get(uri).map(|d| &d.document)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Notification> {
        self.events.subscribe()
    }

    pub fn reference_count(&self) -> usize {
        self.docs
            .values()
            .map(|d| count_semantic_references(&d.document))
            .sum()
    }

    fn open_count(&self, uri: &str) -> usize {
        self.impacts.get(uri).map_or(0, |rs| {
            rs.iter().filter(|r| r.status == ImpactStatus::Open).count()
        })
    }

    pub fn corpus(&self) -> CorpusView {
        let documents: Vec<_> = self
            .docs
            .iter()
            .map(|(uri, d)| DocSummary {
                uri: uri.clone(),
                kind: d.kind,
                version: d.version,
                open_impacts: self.open_count(uri),
            })
            .collect();
        CorpusView {
            corpus_version: self.corpus_version,
            policy: self.policy,
            open_impacts: documents.iter().map(|d| d.open_impacts).sum(),
            documents,
        }
    }

    pub fn source_path(&self, uri: &str) -> Result<PathBuf, BrokerError> {
        let d = self
            .docs
            .get(uri)
            .ok_or_else(|| BrokerError::UnknownDocument(uri.to_string()))?;
        Ok(self.root.join(format!("{uri}.{}", d.kind.extension())))
    }

    pub fn view(&self, uri: &str) -> Result<DocView, BrokerError> {
        let d = self
            .docs
            .get(uri)
            .ok_or_else(|| BrokerError::UnknownDocument(uri.to_string()))?;
        let path = self.source_path(uri)?;
        let source = fs::read_to_string(&path).map_err(io(&path))?;
        let spans = match d.kind {
            SourceKind::Stex => parse_stex_with(&source, &self.options)
                .map(|p| p.spans)
                .unwrap_or_default(),
            SourceKind::Omdoc => id_spans(&source),
        };
        Ok(DocView {
            uri: uri.to_string(),
            kind: d.kind,
            version: d.version,
            source,
            ids: spans
                .into_iter()
                .map(|(id, (offset, length))| IdSpan { id, offset, length })
                .collect(),
            impacts: self.impacts.get(uri).cloned().unwrap_or_default(),
        })
    }

    /// All records of one document, or of every document.
    pub fn impacts(&self, uri: Option<&str>) -> Result<Vec<ImpactRecord>, BrokerError> {
        match uri {
            Some(u) => {
                if !self.docs.contains_key(u) {
                    return Err(BrokerError::UnknownDocument(u.to_string()));
                }
                Ok(self.impacts.get(u).cloned().unwrap_or_default())
            }
            None => Ok(self.impacts.values().flatten().cloned().collect()),
        }
    }

    pub fn impact(&self, id: &str) -> Option<&ImpactRecord> {
        self.impacts.values().flatten().find(|r| r.id == id)
    }

    fn open_map(&self) -> BTreeMap<String, Vec<ImpactRecord>> {
        self.docs
            .keys()
            .map(|uri| {
                let open = self
                    .impacts
                    .get(uri)
                    .into_iter()
                    .flatten()
                    .filter(|r| r.status == ImpactStatus::Open)
                    .cloned()
                    .collect();
                (uri.clone(), open)
            })
            .collect()
    }

    /// Stores a new version of `name` (`uri` or `uri.tex`/`uri.omdoc`) and
    /// analyses the corpus if asked to or if the policy is eager.
    pub fn commit(
        &mut self,
        name: &str,
        source: &str,
        request_cia: bool,
    ) -> Result<CommitResult, BrokerError> {
        let (uri, ext_kind) = split_uri(name);
        let kind = match (self.docs.get(&uri), ext_kind) {
            (Some(d), _) => d.kind,
            (None, Some(k)) => k,
            (None, None) => return Err(BrokerError::UnknownDocument(uri)),
        };
        let document = parse_source(&uri, kind, source, &self.options)?;

        let mut graph = self.graph.clone();
        let edit_ops = match self.docs.get(&uri) {
            Some(old) => cia::sync_document(&mut graph, &old.document, &document, &self.model)?.ops,
            None => {
                cia::encode_document(&mut graph, &document)?;
                document.element_count()
            }
        };
        let run_cia = request_cia || self.policy == Policy::Eager;
        let mut analysed = graph.clone();
        let outcome = run_cia.then(|| cia::analyze(&mut analysed, &self.rules));

        // from here on the commit is accepted
        let path = self.root.join(format!("{uri}.{}", kind.extension()));
        write_atomic(&path, source)?;
        self.corpus_version += 1;
        let version = self.docs.get(&uri).map_or(1, |d| d.version + 1);
        self.docs.insert(
            uri.clone(),
            DocState {
                kind,
                version,
                document,
            },
        );
        self.write_generated(&uri)?;

        let mut result = CommitResult {
            uri: uri.clone(),
            version,
            corpus_version: self.corpus_version,
            edit_ops,
            cia: run_cia,
            impacts_available: run_cia,
            cia_error: None,
            new_impacts: Vec::new(),
            impacts: BTreeMap::new(),
        };
        match outcome {
            Some(Ok(analysis)) => {
                self.graph = analysed;
                result.new_impacts = self.table(&analysis.impacts);
                self.reanchor();
                self.write_all_imp()?;
                self.notify(&result.new_impacts);
            }
            Some(Err(e)) => {
                self.graph = graph;
                result.impacts_available = false;
                result.cia_error = Some(e.to_string());
                self.impacts.entry(uri.clone()).or_default();
                self.write_imp_file(&uri)?;
            }
            None => {
                self.graph = graph;
                if !self.imp_path(&uri).exists() {
                    self.impacts.entry(uri.clone()).or_default();
                    self.write_imp_file(&uri)?;
                }
            }
        }
        self.save_state()?;
        self.journal("commit", &uri)?;
        result.impacts = self.open_map();
        Ok(result)
    }

    /// Reverse dependency closure of the element, projected to element ids.
    /// Does not change anything.
    pub fn estimate(&self, uri: &str, element_id: &str) -> Result<Estimate, BrokerError> {
        if !self.docs.contains_key(uri) {
            return Err(BrokerError::UnknownDocument(uri.to_string()));
        }
        let start = cia::semantic_nodes_at(&self.graph, uri, element_id);
        if start.is_empty() {
            return Err(BrokerError::UnknownElement {
                uri: uri.to_string(),
                id: element_id.to_string(),
            });
        }
        let closure = cia::dependency_closure(&self.graph, &start);
        let affected: BTreeSet<(String, String)> = closure
            .iter()
            .filter_map(|&n| cia::locate(&self.graph, n))
            .collect();
        Ok(Estimate {
            uri: uri.to_string(),
            element_id: element_id.to_string(),
            count: closure.len(),
            affected: affected
                .into_iter()
                .map(|(uri, element_id)| Affected { uri, element_id })
                .collect(),
        })
    }

    /// Discards or resolves an open impact. Discarding also discards the
    /// open impacts derived from it; resolving with a new source commits it
    /// and runs another analysis round.
    pub fn resolve(
        &mut self,
        impact_id: &str,
        action: Resolution,
        new_source: Option<&str>,
    ) -> Result<ResolveResult, BrokerError> {
        let record = self
            .impact(impact_id)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownImpact(impact_id.to_string()))?;
        if record.status != ImpactStatus::Open {
            return Err(BrokerError::ImpactClosed {
                id: record.id,
                status: record.status,
            });
        }
        if let Some(src) = new_source {
            // reject a bad source before touching any record
            let kind = self.docs[&record.uri].kind;
            parse_source(&record.uri, kind, src, &self.options)?;
        }
        let mut changed = BTreeSet::from([record.id.clone()]);
        if action == Resolution::Discard {
            let mut queue = VecDeque::from([record.id.clone()]);
            while let Some(id) = queue.pop_front() {
                for r in self.impacts.values().flatten() {
                    if r.status == ImpactStatus::Open
                        && r.caused_by.as_deref() == Some(id.as_str())
                        && changed.insert(r.id.clone())
                    {
                        queue.push_back(r.id.clone());
                    }
                }
            }
        }
        let status = match action {
            Resolution::Discard => ImpactStatus::Discarded,
            Resolution::Resolve => ImpactStatus::Resolved,
        };
        let mut updated = Vec::new();
        for r in self.impacts.values_mut().flatten() {
            if changed.contains(&r.id) {
                r.status = status;
                updated.push(r.clone());
            }
        }
        self.write_all_imp()?;
        let commit = match new_source {
            Some(src) => Some(self.commit(&record.uri, src, true)?),
            None => None,
        };
        Ok(ResolveResult { updated, commit })
    }

    /// Turns the impacts of a run into records, reusing open records for
    /// the same element and description. Returns the new ones.
    fn table(&mut self, impacts: &[cia::Impact]) -> Vec<ImpactRecord> {
        let mut by_node: BTreeMap<u64, String> = BTreeMap::new();
        let mut fresh = Vec::new();
        for i in impacts {
            if i.doc.is_empty() || !self.docs.contains_key(&i.doc) {
                continue;
            }
            let list = self.impacts.entry(i.doc.clone()).or_default();
            let existing = list.iter().find(|r| {
                r.status == ImpactStatus::Open && r.target == i.for_id && r.name == i.desc
            });
            let id = match existing {
                Some(r) => r.id.clone(),
                None => {
                    let id = format!("imp-{}", self.next_impact);
                    self.next_impact += 1;
                    let record = ImpactRecord {
                        id: id.clone(),
                        uri: i.doc.clone(),
                        target: i.for_id.clone(),
                        name: i.desc.clone(),
                        status: ImpactStatus::Open,
                        caused_by: i.caused_by.iter().find_map(|c| by_node.get(c).cloned()),
                        corpus_version: self.corpus_version,
                    };
                    list.push(record.clone());
                    fresh.push(record);
                    id
                }
            };
            by_node.insert(i.node, id);
        }
        fresh
    }

    /// Records whose element is gone are moved to the document's root.
    fn reanchor(&mut self) {
        for (uri, records) in &mut self.impacts {
            let Some(d) = self.docs.get(uri) else {
                continue;
            };
            let Some(root) = d.document.root.id.clone() else {
                continue;
            };
            for r in records.iter_mut() {
                if d.document.element_by_id(&r.target).is_none() {
                    r.target = root.clone();
                }
            }
        }
    }

    fn notify(&self, fresh: &[ImpactRecord]) {
        let mut by_uri: BTreeMap<&str, Vec<ImpactRecord>> = BTreeMap::new();
        for r in fresh {
            by_uri.entry(&r.uri).or_default().push(r.clone());
        }
        for (uri, impacts) in by_uri {
            // no receivers is fine
            let _ = self.events.send(Notification {
                uri: uri.to_string(),
                corpus_version: self.corpus_version,
                impacts,
            });
        }
    }

    fn imp_path(&self, uri: &str) -> PathBuf {
        self.root.join(format!("{uri}.imp"))
    }

    fn write_imp_file(&self, uri: &str) -> Result<(), BrokerError> {
        let records = self.impacts.get(uri).map(Vec::as_slice).unwrap_or(&[]);
        let file_name = format!("{}.omdoc", uri.rsplit('/').next().unwrap_or(uri));
        write_atomic(
            &self.imp_path(uri),
            &write_imp(&file_name, self.corpus_version, records),
        )
    }

    fn write_all_imp(&self) -> Result<(), BrokerError> {
        for uri in self.docs.keys() {
            self.write_imp_file(uri)?;
        }
        Ok(())
    }

    /// The `.omdoc` sibling of an sTeX source.
    fn write_generated(&self, uri: &str) -> Result<(), BrokerError> {
        let d = &self.docs[uri];
        if d.kind == SourceKind::Stex {
            let path = self.root.join(format!("{uri}.omdoc"));
            write_atomic(&path, &serialize_omdoc(&d.document))?;
        }
        Ok(())
    }

    fn save_state(&self) -> Result<(), BrokerError> {
        let state = State {
            corpus_version: self.corpus_version,
            policy: self.policy,
            documents: self.docs.clone(),
            graph: self.graph.snapshot(),
        };
        let text = serde_json::to_string(&state).map_err(|e| BrokerError::State(e.to_string()))?;
        write_atomic(&self.root.join(STATE_DIR).join(STATE_FILE), &text)
    }

    fn journal(&self, event: &str, uri: &str) -> Result<(), BrokerError> {
        let path = self.root.join(STATE_DIR).join(JOURNAL_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        writeln!(f, "{}\t{event}\t{uri}", self.corpus_version).map_err(io(&path))
    }
}

fn read_mapping(root: &Path) -> Result<StexOptions, BrokerError> {
    let path = root.join(MAPPING_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(StexOptions::from_mapping(&text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(StexOptions::default()),
        Err(e) => Err(io(&path)(e)),
    }
}

fn parse_source(
    uri: &str,
    kind: SourceKind,
    src: &str,
    options: &StexOptions,
) -> Result<Document, BrokerError> {
    let parse_err = |message: String| BrokerError::Parse {
        uri: uri.to_string(),
        message,
    };
    let mut doc = match kind {
        SourceKind::Stex => {
            parse_stex_with(src, options)
                .map_err(|e| parse_err(e.to_string()))?
                .document
        }
        SourceKind::Omdoc => parse_omdoc(src).map_err(|e: DocError| parse_err(e.to_string()))?,
    };
    doc.validate().map_err(|e| parse_err(e.to_string()))?;
    doc.uri = uri.to_string();
    Ok(doc)
}
