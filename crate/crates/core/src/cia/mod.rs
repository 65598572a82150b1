//! Change impact analysis over a corpus encoded in one typed graph: the
//! syntax layer is kept in sync with the documents, the rule strategy
//! derives semantics and impacts, and the impacts are read back as records
//! anchored at element ids.

mod syntax;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{Layer, NodeId, TypedGraph, DESC, STATUS};
use crate::metamodel::{
    DEPENDS_ON_IMPACT, IMPACT, IMPORTS, JUSTIFICATION_EDGES, OCCURS, ORIGIN, USES,
};
use crate::rewrite::{run_strategy, RewriteError, RuleSet, RunReport};

pub use syntax::{
    document_root, documents, encode_document, fingerprint, remove_document, sync_document,
    syntax_node, tagged_tree, SyncError, SyncStats, ANCHOR, DOC, FINGERPRINT, POS, TEXT, THEORY,
};

/// One impact node of the last run, projected to the syntax side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impact {
    pub node: NodeId,
    pub kind: String,
    pub desc: String,
    /// The semantic node the impact is attached to.
    pub target: NodeId,
    pub doc: String,
    /// Element id the impact is anchored at.
    pub for_id: String,
    /// Impacts this one was derived from.
    pub caused_by: Vec<NodeId>,
}

#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub report: RunReport,
    pub impacts: Vec<Impact>,
}

/// Runs the full strategy and collects the resulting impacts.
pub fn analyze(g: &mut TypedGraph, rules: &RuleSet) -> Result<Analysis, RewriteError> {
    let report = run_strategy(rules, g)?;
    Ok(Analysis {
        report,
        impacts: impacts(g),
    })
}

/// The impact nodes currently in the graph, in creation order.
pub fn impacts(g: &TypedGraph) -> Vec<Impact> {
    g.nodes()
        .filter(|n| g.schema().layer(&n.ty) == Some(Layer::Impact))
        .map(|n| {
            let target = g.successors(n.id, IMPACT).first().copied().unwrap_or(n.id);
            let get = |k: &str| n.attrs.get(k).cloned().unwrap_or_default();
            Impact {
                node: n.id,
                kind: n.ty.clone(),
                desc: get(DESC),
                target,
                doc: get("doc"),
                for_id: get("for"),
                caused_by: g.successors(n.id, DEPENDS_ON_IMPACT),
            }
        })
        .collect()
}

/// Semantic nodes that directly depend on `node`: users, occurrences,
/// importers, and whatever `node` justifies.
pub fn dependents(g: &TypedGraph, node: NodeId) -> BTreeSet<NodeId> {
    let mut out: BTreeSet<NodeId> = [USES, OCCURS, IMPORTS]
        .iter()
        .flat_map(|ty| g.predecessors(node, ty))
        .collect();
    for ty in JUSTIFICATION_EDGES {
        out.extend(g.successors(node, ty));
    }
    out
}

/// Everything that transitively depends on one of `from`, excluding the
/// start nodes unless they are reached again.
pub fn dependency_closure(g: &TypedGraph, from: &[NodeId]) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = from.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        for d in dependents(g, n) {
            if seen.insert(d) {
                queue.push_back(d);
            }
        }
    }
    seen
}

/// The live semantic nodes originating from element `id` of `uri`.
pub fn semantic_nodes_at(g: &TypedGraph, uri: &str, id: &str) -> Vec<NodeId> {
    let Some(e) = syntax_node(g, uri, id) else {
        return Vec::new();
    };
    g.predecessors(e, ORIGIN)
        .into_iter()
        .filter(|&s| g.attr(s, STATUS) != Some("deleted"))
        .collect()
}

/// Where a semantic node shows up in the documents: the anchor of its
/// origin, or its theory when it has no origin left.
pub fn locate(g: &TypedGraph, node: NodeId) -> Option<(String, String)> {
    if let Some(&e) = g.successors(node, ORIGIN).first() {
        return Some((g.attr(e, DOC)?.to_string(), g.attr(e, ANCHOR)?.to_string()));
    }
    Some((
        g.attr(node, "doc")?.to_string(),
        g.attr(node, "theory")?.to_string(),
    ))
}

/// Counts semantic nodes by status.
pub fn status_counts(g: &TypedGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for n in g.nodes() {
        if g.schema().layer(&n.ty) == Some(Layer::Semantic) {
            let s = n.attrs.get(STATUS).cloned().unwrap_or_default();
            *out.entry(s).or_default() += 1;
        }
    }
    out
}
