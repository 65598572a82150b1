//! Typed graph holding the syntax, semantic and impact layers.

mod pattern;
mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pattern::{Binding, Condition, Operand, Pattern, PatternEdge, PatternNode};
pub use schema::{EdgeSignature, Layer, Schema, IMPACT_ROOT, SEMANTIC_ROOT, SYNTAX_ROOT};

pub type NodeId = u64;
pub type EdgeId = u64;

pub const STATUS: &str = "status";
pub const DESC: &str = "desc";
pub const STATUS_VALUES: [&str; 3] = ["added", "preserved", "deleted"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("type `{0}` declared twice")]
    DuplicateType(String),
    #[error("edge type `{0}` must keep the signature of its supertype")]
    SignatureMismatch(String),
    #[error("{edge} must be {}→{}", expected.source.name(), expected.target.name())]
    SignatureViolation {
        edge: String,
        expected: EdgeSignature,
    },
    #[error("no node with id {0}")]
    UnknownNode(NodeId),
    #[error("semantic node {id} ({ty}) has no valid status (found {found:?})")]
    InvalidStatus {
        id: NodeId,
        ty: String,
        found: Option<String>,
    },
    #[error("impact node {id} ({ty}) has no desc")]
    MissingDesc { id: NodeId, ty: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub ty: String,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub ty: String,
    pub source: NodeId,
    pub target: NodeId,
}

/// Serializable contents of a graph, without its schema.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub next_node: NodeId,
    pub next_edge: EdgeId,
}

/// Ids are handed out in increasing order, so ascending id order is
/// insertion order.
#[derive(Debug, Clone)]
pub struct TypedGraph {
    schema: Arc<Schema>,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    inc: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    by_type: BTreeMap<String, BTreeSet<NodeId>>,
    next_node: NodeId,
    next_edge: EdgeId,
}

impl TypedGraph {
    pub fn new(schema: Arc<Schema>) -> Self {
        TypedGraph {
            schema,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            out: BTreeMap::new(),
            inc: BTreeMap::new(),
            by_type: BTreeMap::new(),
            next_node: 1,
            next_edge: 1,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        self.schema.clone()
    }

    /// Adds a node and checks the layer invariants on it.
    pub fn add_node<K, V>(
        &mut self,
        ty: &str,
        attrs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<NodeId, GraphError>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let id = self.add_node_unchecked(ty, attrs)?;
        if let Err(e) = self.check_node(id) {
            self.remove_node(id)?;
            return Err(e);
        }
        Ok(id)
    }

    /// Adds a node without the status/desc checks. Callers are expected to
    /// fill in the attributes and call [`TypedGraph::check_node`].
    pub fn add_node_unchecked<K, V>(
        &mut self,
        ty: &str,
        attrs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<NodeId, GraphError>
    where
        K: Into<String>,
        V: Into<String>,
    {
        if !self.schema.has_node_type(ty) {
            return Err(GraphError::UnknownNodeType(ty.to_string()));
        }
        let id = self.next_node;
        self.next_node += 1;
        let attrs = attrs
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        self.insert_node(Node {
            id,
            ty: ty.to_string(),
            attrs,
        });
        Ok(id)
    }

    fn insert_node(&mut self, node: Node) {
        self.by_type
            .entry(node.ty.clone())
            .or_default()
            .insert(node.id);
        self.nodes.insert(node.id, node);
    }

    pub fn check_node(&self, id: NodeId) -> Result<(), GraphError> {
        let node = self.node(id).ok_or(GraphError::UnknownNode(id))?;
        match self.schema.layer(&node.ty) {
            Some(Layer::Semantic) => {
                let status = node.attrs.get(STATUS);
                if !status.is_some_and(|s| STATUS_VALUES.contains(&s.as_str())) {
                    return Err(GraphError::InvalidStatus {
                        id,
                        ty: node.ty.clone(),
                        found: status.cloned(),
                    });
                }
            }
            Some(Layer::Impact) if !node.attrs.contains_key(DESC) => {
                return Err(GraphError::MissingDesc {
                    id,
                    ty: node.ty.clone(),
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Adds an edge after checking its signature. Adding an edge that
    /// already exists returns the existing id.
    pub fn add_edge(
        &mut self,
        ty: &str,
        source: NodeId,
        target: NodeId,
    ) -> Result<EdgeId, GraphError> {
        let sig = self
            .schema
            .signature(ty)
            .ok_or_else(|| GraphError::UnknownEdgeType(ty.to_string()))?;
        let layer_of = |id: NodeId| {
            self.node(id)
                .map(|n| self.schema.layer(&n.ty).expect("node types are registered"))
                .ok_or(GraphError::UnknownNode(id))
        };
        if layer_of(source)? != sig.source || layer_of(target)? != sig.target {
            return Err(GraphError::SignatureViolation {
                edge: ty.to_string(),
                expected: sig,
            });
        }
        if let Some(e) = self.find_edge(ty, source, target) {
            return Ok(e);
        }
        let id = self.next_edge;
        self.next_edge += 1;
        self.insert_edge(Edge {
            id,
            ty: ty.to_string(),
            source,
            target,
        });
        Ok(id)
    }

    fn insert_edge(&mut self, e: Edge) {
        self.out.entry(e.source).or_default().insert(e.id);
        self.inc.entry(e.target).or_default().insert(e.id);
        self.edges.insert(e.id, e);
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Option<Edge> {
        let e = self.edges.remove(&id)?;
        if let Some(s) = self.out.get_mut(&e.source) {
            s.remove(&id);
        }
        if let Some(s) = self.inc.get_mut(&e.target) {
            s.remove(&id);
        }
        Some(e)
    }

    /// Removes a node together with its incident edges.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Node, GraphError> {
        let node = self.nodes.remove(&id).ok_or(GraphError::UnknownNode(id))?;
        let incident: Vec<EdgeId> = self
            .out
            .remove(&id)
            .into_iter()
            .chain(self.inc.remove(&id))
            .flatten()
            .collect();
        for e in incident {
            self.remove_edge(e);
        }
        if let Some(s) = self.by_type.get_mut(&node.ty) {
            s.remove(&id);
        }
        Ok(node)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn attr(&self, id: NodeId, key: &str) -> Option<&str> {
        self.nodes.get(&id)?.attrs.get(key).map(String::as_str)
    }

    pub fn set_attr(
        &mut self,
        id: NodeId,
        key: &str,
        value: impl Into<String>,
    ) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        node.attrs.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Replaces the whole attribute map and re-checks the node.
    pub fn replace_attrs(
        &mut self,
        id: NodeId,
        attrs: BTreeMap<String, String>,
    ) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        let old = std::mem::replace(&mut node.attrs, attrs);
        if let Err(e) = self.check_node(id) {
            self.nodes.get_mut(&id).expect("present").attrs = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn remove_attr(&mut self, id: NodeId, key: &str) -> Result<Option<String>, GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        Ok(node.attrs.remove(key))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    /// Nodes of `ty` or any of its subtypes, ascending.
    pub fn nodes_of_type(&self, ty: &str) -> Vec<NodeId> {
        let Some(types) = self.schema.subtypes(ty) else {
            return Vec::new();
        };
        let mut ids: Vec<NodeId> = types
            .iter()
            .filter_map(|t| self.by_type.get(t))
            .flatten()
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.out
            .get(&id)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e])
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.inc
            .get(&id)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e])
    }

    /// Targets of outgoing edges of type `ty` (or a subtype), ascending.
    pub fn successors(&self, id: NodeId, ty: &str) -> Vec<NodeId> {
        let set: BTreeSet<_> = self
            .out_edges(id)
            .filter(|e| self.schema.is_edge_subtype(&e.ty, ty))
            .map(|e| e.target)
            .collect();
        set.into_iter().collect()
    }

    pub fn predecessors(&self, id: NodeId, ty: &str) -> Vec<NodeId> {
        let set: BTreeSet<_> = self
            .in_edges(id)
            .filter(|e| self.schema.is_edge_subtype(&e.ty, ty))
            .map(|e| e.source)
            .collect();
        set.into_iter().collect()
    }

    pub fn find_edge(&self, ty: &str, source: NodeId, target: NodeId) -> Option<EdgeId> {
        self.out_edges(source)
            .find(|e| e.target == target && self.schema.is_edge_subtype(&e.ty, ty))
            .map(|e| e.id)
    }

    pub fn has_edge(&self, ty: &str, source: NodeId, target: NodeId) -> bool {
        self.find_edge(ty, source, target).is_some()
    }

    /// One line per node (`id TYPE {attrs}`) followed by one line per edge
    /// (`src -TYPE-> dst`), both in id order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            let attrs: Vec<String> = n.attrs.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
            let _ = writeln!(out, "{} {} {{{}}}", n.id, n.ty, attrs.join(", "));
        }
        for e in self.edges.values() {
            let _ = writeln!(out, "{} -{}-> {}", e.source, e.ty, e.target);
        }
        out
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
            next_node: self.next_node,
            next_edge: self.next_edge,
        }
    }

    /// Rebuilds a graph, re-checking every node and edge against `schema`.
    pub fn from_snapshot(schema: Arc<Schema>, snap: GraphSnapshot) -> Result<Self, GraphError> {
        let mut g = TypedGraph::new(schema);
        for n in snap.nodes {
            if !g.schema.has_node_type(&n.ty) {
                return Err(GraphError::UnknownNodeType(n.ty));
            }
            let id = n.id;
            g.insert_node(n);
            g.check_node(id)?;
        }
        for e in snap.edges {
            g.next_edge = e.id;
            let id = g.add_edge(&e.ty, e.source, e.target)?;
            debug_assert_eq!(id, e.id);
        }
        let max_node = g.nodes.keys().next_back().map_or(0, |m| m + 1);
        let max_edge = g.edges.keys().next_back().map_or(0, |m| m + 1);
        g.next_node = snap.next_node.max(max_node).max(1);
        g.next_edge = snap.next_edge.max(max_edge).max(1);
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<Schema> {
        let mut s = Schema::new();
        s.add_node_type("Omtext", SYNTAX_ROOT).unwrap();
        s.add_node_type("TheoryObject", SEMANTIC_ROOT).unwrap();
        s.add_node_type("SemDefinition", "TheoryObject").unwrap();
        s.add_node_type("DefinitionChanged", IMPACT_ROOT).unwrap();
        let sem_syn = EdgeSignature {
            source: Layer::Semantic,
            target: Layer::Syntax,
        };
        s.add_edge_type("origin", None, sem_syn).unwrap();
        s.add_edge_type(
            "impact",
            None,
            EdgeSignature {
                source: Layer::Impact,
                target: Layer::Semantic,
            },
        )
        .unwrap();
        Arc::new(s)
    }

    #[test]
    fn supertype_query_finds_subtypes() {
        let mut g = TypedGraph::new(schema());
        let d = g.add_node("SemDefinition", [(STATUS, "added")]).unwrap();
        assert_eq!(g.nodes_of_type(SEMANTIC_ROOT), vec![d]);
        assert_eq!(g.nodes_of_type("TheoryObject"), vec![d]);
        assert!(g.nodes_of_type(SYNTAX_ROOT).is_empty());
        let deleted = Pattern::new()
            .node("x", SEMANTIC_ROOT)
            .attr_eq("x", STATUS, "deleted");
        assert!(g.query(&deleted).is_empty());
    }

    #[test]
    fn layer_invariants_are_enforced() {
        let mut g = TypedGraph::new(schema());
        assert!(matches!(
            g.add_node("DefinitionChanged", Vec::<(String, String)>::new()),
            Err(GraphError::MissingDesc { .. })
        ));
        assert!(matches!(
            g.add_node("SemDefinition", [(STATUS, "bogus")]),
            Err(GraphError::InvalidStatus { .. })
        ));
        assert_eq!(g.node_count(), 0);
        assert_eq!(
            g.add_node("Nope", [("a", "b")]),
            Err(GraphError::UnknownNodeType("Nope".into()))
        );
    }

    #[test]
    fn edge_signatures() {
        let mut g = TypedGraph::new(schema());
        let d = g.add_node("SemDefinition", [(STATUS, "added")]).unwrap();
        let o = g.add_node("Omtext", [("type", "definition")]).unwrap();
        let i = g.add_node("DefinitionChanged", [(DESC, "x")]).unwrap();
        assert!(g.add_edge("origin", d, o).is_ok());
        let err = g.add_edge("origin", o, d).unwrap_err();
        assert_eq!(err.to_string(), "origin must be semantic→syntax");
        assert!(g.add_edge("impact", i, o).is_err());
        assert!(g.add_edge("impact", i, d).is_ok());
        // set semantics for parallel edges
        assert_eq!(g.add_edge("origin", d, o), g.add_edge("origin", d, o));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn removal_drops_incident_edges() {
        let mut g = TypedGraph::new(schema());
        let d = g.add_node("SemDefinition", [(STATUS, "added")]).unwrap();
        let o = g.add_node("Omtext", [("k", "v")]).unwrap();
        g.add_edge("origin", d, o).unwrap();
        g.remove_node(o).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.out_edges(d).next().is_none());
    }

    #[test]
    fn dump_and_snapshot() {
        let mut g = TypedGraph::new(schema());
        let d = g
            .add_node("SemDefinition", [(STATUS, "added"), ("xmlid", "a\"b")])
            .unwrap();
        let o = g.add_node("Omtext", [("type", "definition")]).unwrap();
        g.add_edge("origin", d, o).unwrap();
        assert_eq!(
            g.dump(),
            "1 SemDefinition {status=\"added\", xmlid=\"a\\\"b\"}\n\
             2 Omtext {type=\"definition\"}\n\
             1 -origin-> 2\n"
        );
        let json = serde_json::to_string(&g.snapshot()).unwrap();
        let back: GraphSnapshot = serde_json::from_str(&json).unwrap();
        let mut h = TypedGraph::from_snapshot(schema(), back).unwrap();
        assert_eq!(h.dump(), g.dump());
        assert_eq!(h.add_node("Omtext", [("a", "b")]).unwrap(), 3);
    }

    #[test]
    fn matcher_is_injective_and_ordered() {
        let mut g = TypedGraph::new(schema());
        let a = g.add_node("Omtext", [("n", "1")]).unwrap();
        let b = g.add_node("Omtext", [("n", "2")]).unwrap();
        let p = Pattern::new().node("x", "Omtext").node("y", "Omtext");
        assert_eq!(g.query(&p), vec![vec![a, b], vec![b, a]]);
        let same = p.clone().condition(Condition::Eq(
            Operand::Attr {
                var: 0,
                key: "n".into(),
            },
            Operand::Attr {
                var: 1,
                key: "n".into(),
            },
        ));
        assert!(g.query(&same).is_empty());
        assert_eq!(g.first_match(&p, &[None, Some(a)], None), Some(vec![b, a]));
    }
}
