//! Syntax layer encoding of documents and its synchronisation with new
//! document versions through edit scripts.
//!
//! Every content element, text runs included, becomes one syntax node
//! carrying the element's attributes verbatim plus a few derived ones
//! (prefixed with `_`). `child` edges mirror the tree; `owner` edges link
//! each element to the nearest statement-level element above it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diff::{diff, DiffError, SimilarityModel, TaggedTree};
use crate::doc::{ContentElement, Document, ElementKind, XML_ID};
use crate::graph::{GraphError, NodeId, TypedGraph};
use crate::metamodel::{CHILD, OWNER};

/// Document uri.
pub const DOC: &str = "_doc";
/// Index among the parent's children.
pub const POS: &str = "_pos";
/// Nearest `xml:id` on the element or above it.
pub const ANCHOR: &str = "_anchor";
/// Id of the innermost enclosing theory.
pub const THEORY: &str = "_theory";
/// Body fingerprint of statement-level elements.
pub const FINGERPRINT: &str = "_fp";
/// Payload of text runs.
pub const TEXT: &str = "_text";

#[derive(Debug, Error, PartialEq)]
pub enum SyncError {
    #[error("document `{0}` is not in the graph")]
    UnknownDocument(String),
    #[error("document `{0}` is already in the graph")]
    DuplicateDocument(String),
    #[error("graph and document `{0}` disagree on the tree shape")]
    ShapeMismatch(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStats {
    pub ops: usize,
    pub added: usize,
    pub removed: usize,
    pub updated: usize,
}

/// Hash of the subtree with ids dropped and whitespace collapsed.
pub fn fingerprint(e: &ContentElement) -> String {
    fn canon(e: &ContentElement, out: &mut String) {
        if e.is_text() {
            let t = e.text.as_deref().unwrap_or("");
            out.push_str(&t.split_whitespace().collect::<Vec<_>>().join(" "));
            out.push('\u{1}');
            return;
        }
        out.push('<');
        out.push_str(e.kind.tag());
        for (k, v) in &e.attributes {
            if k != "about" {
                out.push_str(&format!(" {k}={v:?}"));
            }
        }
        out.push('>');
        for c in &e.children {
            canon(c, out);
        }
        out.push_str("</>");
    }
    let mut s = String::new();
    canon(e, &mut s);
    let digest = Sha256::digest(s.as_bytes());
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone)]
struct Ctx<'a> {
    uri: &'a str,
    anchor: String,
    theory: String,
    owner: Option<NodeId>,
}

fn attrs_for(
    e: &ContentElement,
    full: Option<&ContentElement>,
    ctx: &Ctx<'_>,
    pos: usize,
) -> BTreeMap<String, String> {
    let mut attrs: BTreeMap<String, String> = e
        .all_attributes()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    attrs.insert(DOC.into(), ctx.uri.into());
    attrs.insert(POS.into(), pos.to_string());
    attrs.insert(
        ANCHOR.into(),
        e.id.clone().unwrap_or_else(|| ctx.anchor.clone()),
    );
    let theory = match (&e.id, e.kind) {
        (Some(id), ElementKind::Theory) => id.clone(),
        _ => ctx.theory.clone(),
    };
    attrs.insert(THEORY.into(), theory);
    if let Some(t) = &e.text {
        attrs.insert(TEXT.into(), t.clone());
    }
    if let Some(full) = full.filter(|f| f.kind.is_statement()) {
        attrs.insert(FINGERPRINT.into(), fingerprint(full));
    }
    attrs
}

fn inner_ctx<'a>(e: &ContentElement, ctx: &Ctx<'a>, id: NodeId) -> Ctx<'a> {
    let mut c = ctx.clone();
    if let Some(x) = &e.id {
        c.anchor = x.clone();
        if e.kind == ElementKind::Theory {
            c.theory = x.clone();
        }
    }
    if e.kind.is_statement() {
        c.owner = Some(id);
    }
    c
}

fn syntax_nodes(g: &TypedGraph, uri: &str) -> Vec<NodeId> {
    g.nodes()
        .filter(|n| n.attrs.get(DOC).is_some_and(|d| d == uri))
        .filter(|n| g.schema().layer(&n.ty) == Some(crate::graph::Layer::Syntax))
        .map(|n| n.id)
        .collect()
}

/// The syntax node of the root element of `uri`.
pub fn document_root(g: &TypedGraph, uri: &str) -> Option<NodeId> {
    syntax_nodes(g, uri)
        .into_iter()
        .find(|&n| g.predecessors(n, CHILD).is_empty())
}

/// Uris of all documents encoded in the graph.
pub fn documents(g: &TypedGraph) -> BTreeSet<String> {
    g.nodes()
        .filter(|n| g.schema().layer(&n.ty) == Some(crate::graph::Layer::Syntax))
        .filter_map(|n| n.attrs.get(DOC).cloned())
        .collect()
}

/// The syntax node for the element with `xml:id` `id` in `uri`.
pub fn syntax_node(g: &TypedGraph, uri: &str, id: &str) -> Option<NodeId> {
    syntax_nodes(g, uri)
        .into_iter()
        .find(|&n| g.attr(n, XML_ID) == Some(id))
}

/// Pairs the document tree with the syntax nodes encoding it.
pub fn tagged_tree(g: &TypedGraph, doc: &Document) -> Result<TaggedTree<NodeId>, SyncError> {
    fn build(
        g: &TypedGraph,
        id: NodeId,
        e: &ContentElement,
        uri: &str,
    ) -> Result<TaggedTree<NodeId>, SyncError> {
        let mismatch = || SyncError::ShapeMismatch(uri.to_string());
        let node = g.node(id).ok_or_else(mismatch)?;
        if node.ty != e.kind.type_name() {
            return Err(mismatch());
        }
        let mut kids = g.successors(id, CHILD);
        kids.sort_by_key(|&k| {
            g.attr(k, POS)
                .and_then(|p| p.parse::<usize>().ok())
                .unwrap_or(usize::MAX)
        });
        if kids.len() != e.children.len() {
            return Err(mismatch());
        }
        let mut element = e.clone();
        element.children = Vec::new();
        Ok(TaggedTree {
            element,
            tag: Some(id),
            children: kids
                .into_iter()
                .zip(&e.children)
                .map(|(k, c)| build(g, k, c, uri))
                .collect::<Result<_, _>>()?,
        })
    }
    let root =
        document_root(g, &doc.uri).ok_or_else(|| SyncError::UnknownDocument(doc.uri.clone()))?;
    build(g, root, &doc.root, &doc.uri)
}

/// Adds the syntax nodes of a document that is not yet in the graph.
pub fn encode_document(g: &mut TypedGraph, doc: &Document) -> Result<NodeId, SyncError> {
    if document_root(g, &doc.uri).is_some() {
        return Err(SyncError::DuplicateDocument(doc.uri.clone()));
    }
    let mut tree = TaggedTree::untagged(&doc.root);
    let mut stats = SyncStats::default();
    reconcile(g, &doc.uri, &mut tree, &mut stats)?;
    Ok(tree.tag.expect("root was created"))
}

/// Brings the syntax nodes of `old` in line with `new`. Elements the
/// differ matches keep their node, so semantic nodes linked to them keep
/// their identity.
pub fn sync_document(
    g: &mut TypedGraph,
    old: &Document,
    new: &Document,
    model: &SimilarityModel,
) -> Result<SyncStats, SyncError> {
    let mut tree = tagged_tree(g, old)?;
    let script = diff(old, new, model);
    let mut stats = SyncStats {
        ops: script.len(),
        ..SyncStats::default()
    };
    if script.is_empty() {
        return Ok(stats);
    }
    let mut before = BTreeSet::new();
    tree.walk(&mut |_, n| {
        before.extend(n.tag);
    });
    tree.apply_all(&script)?;
    debug_assert_eq!(tree.to_element(), new.root);
    let mut after = BTreeSet::new();
    tree.walk(&mut |_, n| {
        after.extend(n.tag);
    });
    for gone in before.difference(&after) {
        g.remove_node(*gone)?;
        stats.removed += 1;
    }
    reconcile(g, &new.uri, &mut tree, &mut stats)?;
    Ok(stats)
}

/// Removes every syntax node of `uri`.
pub fn remove_document(g: &mut TypedGraph, uri: &str) -> Result<usize, SyncError> {
    let nodes = syntax_nodes(g, uri);
    if nodes.is_empty() {
        return Err(SyncError::UnknownDocument(uri.to_string()));
    }
    for &n in &nodes {
        g.remove_node(n)?;
    }
    Ok(nodes.len())
}

/// Creates nodes for untagged tree nodes, refreshes the attributes of the
/// others and sets the structural edges to exactly the tree's.
fn reconcile(
    g: &mut TypedGraph,
    uri: &str,
    tree: &mut TaggedTree<NodeId>,
    stats: &mut SyncStats,
) -> Result<(), SyncError> {
    fn go(
        g: &mut TypedGraph,
        t: &mut TaggedTree<NodeId>,
        ctx: &Ctx<'_>,
        pos: usize,
        wanted: &mut BTreeSet<(&'static str, NodeId, NodeId)>,
        stats: &mut SyncStats,
    ) -> Result<NodeId, SyncError> {
        let full = t.element.kind.is_statement().then(|| t.to_element());
        let attrs = attrs_for(&t.element, full.as_ref(), ctx, pos);
        let id = match t.tag {
            Some(id) => {
                if g.node(id).map(|n| &n.attrs) != Some(&attrs) {
                    g.replace_attrs(id, attrs)?;
                    stats.updated += 1;
                }
                id
            }
            None => {
                let id = g.add_node(t.element.kind.type_name(), attrs)?;
                t.tag = Some(id);
                stats.added += 1;
                id
            }
        };
        if let Some(owner) = ctx.owner {
            wanted.insert((OWNER, id, owner));
        }
        let inner = inner_ctx(&t.element, ctx, id);
        for (i, c) in t.children.iter_mut().enumerate() {
            let cid = go(g, c, &inner, i, wanted, stats)?;
            wanted.insert((CHILD, id, cid));
        }
        Ok(id)
    }

    let ctx = Ctx {
        uri,
        anchor: String::new(),
        theory: String::new(),
        owner: None,
    };
    let mut wanted = BTreeSet::new();
    go(g, tree, &ctx, 0, &mut wanted, stats)?;

    let mut nodes = BTreeSet::new();
    tree.walk(&mut |_, n| {
        nodes.extend(n.tag);
    });
    let stale: Vec<_> = g
        .edges()
        .filter(|e| (e.ty == CHILD || e.ty == OWNER) && nodes.contains(&e.source))
        .filter(|e| !wanted.contains(&(edge_name(&e.ty), e.source, e.target)))
        .map(|e| e.id)
        .collect();
    for e in stale {
        g.remove_edge(e);
    }
    for (ty, s, t) in wanted {
        g.add_edge(ty, s, t)?;
    }
    Ok(())
}

fn edge_name(ty: &str) -> &'static str {
    if ty == CHILD {
        CHILD
    } else {
        OWNER
    }
}
