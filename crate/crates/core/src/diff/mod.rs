//! Tree difference between two versions of a document.
//!
//! Operations address elements by child-index paths from the root. Each
//! path is interpreted against the tree as it is when that operation is
//! applied. A `Move` first detaches the subtree; its target parent path and
//! position refer to the tree after detaching.

mod matching;
mod model;
mod script;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::{ContentElement, Document, ElementKind};

pub use matching::{match_trees, Matching, EXACT_LIMIT};
pub use model::{KindModel, ModelError, SimilarityModel};
pub use script::{diff, diff_elements};

pub type Path = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum EditOp {
    Insert {
        parent: Path,
        pos: usize,
        subtree: ContentElement,
    },
    Delete {
        path: Path,
    },
    UpdateText {
        path: Path,
        text: String,
    },
    /// `None` removes the attribute. `xml:id` is treated as an attribute.
    UpdateAttr {
        path: Path,
        key: String,
        value: Option<String>,
    },
    Move {
        path: Path,
        parent: Path,
        pos: usize,
    },
}

impl EditOp {
    /// Path of the element the operation acts on (the parent for inserts).
    pub fn path(&self) -> &Path {
        match self {
            EditOp::Insert { parent, .. } => parent,
            EditOp::Delete { path }
            | EditOp::UpdateText { path, .. }
            | EditOp::UpdateAttr { path, .. }
            | EditOp::Move { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("the root element cannot be deleted or moved")]
    RootNotMovable,
    #[error("no element at path {0:?}")]
    InvalidPath(Path),
    #[error("position {pos} out of range for {len} children at {parent:?}")]
    PositionOutOfRange {
        parent: Path,
        pos: usize,
        len: usize,
    },
    #[error("element at {0:?} is not a text node")]
    NotText(Path),
}

/// A content tree whose nodes carry an optional caller-defined tag that
/// survives edit operations. Inserted nodes are untagged.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedTree<T> {
    /// The element without its children.
    pub element: ContentElement,
    pub tag: Option<T>,
    pub children: Vec<TaggedTree<T>>,
}

impl<T> TaggedTree<T> {
    pub fn untagged(e: &ContentElement) -> Self {
        TaggedTree::build(e, &mut |_| None)
    }

    pub fn build(e: &ContentElement, tag: &mut dyn FnMut(&ContentElement) -> Option<T>) -> Self {
        let mut element = e.clone();
        element.children = Vec::new();
        TaggedTree {
            tag: tag(e),
            element,
            children: e
                .children
                .iter()
                .map(|c| TaggedTree::build(c, tag))
                .collect(),
        }
    }

    /// Tags every node with its pre-order index.
    pub fn build_indexed(e: &ContentElement, tag: fn(usize) -> T) -> Self {
        let mut next = 0;
        TaggedTree::build(e, &mut |_| {
            next += 1;
            Some(tag(next - 1))
        })
    }

    pub fn to_element(&self) -> ContentElement {
        let mut e = self.element.clone();
        e.children = self.children.iter().map(TaggedTree::to_element).collect();
        e
    }

    pub fn at(&self, path: &[usize]) -> Option<&TaggedTree<T>> {
        path.iter().try_fold(self, |n, &i| n.children.get(i))
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut TaggedTree<T>> {
        path.iter().try_fold(self, |n, &i| n.children.get_mut(i))
    }

    /// Pre-order walk yielding each node with its path.
    pub fn walk(&self, f: &mut dyn FnMut(&Path, &TaggedTree<T>)) {
        fn go<T>(n: &TaggedTree<T>, path: &mut Path, f: &mut dyn FnMut(&Path, &TaggedTree<T>)) {
            f(path, n);
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    pub(crate) fn detach(&mut self, path: &[usize]) -> Result<TaggedTree<T>, DiffError> {
        let (&last, parent) = path.split_last().ok_or(DiffError::RootNotMovable)?;
        let p = self
            .at_mut(parent)
            .ok_or_else(|| DiffError::InvalidPath(path.to_vec()))?;
        if last >= p.children.len() {
            return Err(DiffError::InvalidPath(path.to_vec()));
        }
        Ok(p.children.remove(last))
    }

    pub(crate) fn attach(
        &mut self,
        parent: &[usize],
        pos: usize,
        node: TaggedTree<T>,
    ) -> Result<(), DiffError> {
        let p = self
            .at_mut(parent)
            .ok_or_else(|| DiffError::InvalidPath(parent.to_vec()))?;
        if pos > p.children.len() || p.element.is_text() {
            return Err(DiffError::PositionOutOfRange {
                parent: parent.to_vec(),
                pos,
                len: p.children.len(),
            });
        }
        p.children.insert(pos, node);
        Ok(())
    }

    pub fn apply(&mut self, op: &EditOp) -> Result<(), DiffError> {
        match op {
            EditOp::Insert {
                parent,
                pos,
                subtree,
            } => self.attach(parent, *pos, TaggedTree::untagged(subtree)),
            EditOp::Delete { path } => self.detach(path).map(|_| ()),
            EditOp::UpdateText { path, text } => {
                let n = self
                    .at_mut(path)
                    .ok_or_else(|| DiffError::InvalidPath(path.clone()))?;
                if n.element.kind != ElementKind::Text {
                    return Err(DiffError::NotText(path.clone()));
                }
                n.element.text = Some(text.clone());
                Ok(())
            }
            EditOp::UpdateAttr { path, key, value } => {
                let n = self
                    .at_mut(path)
                    .ok_or_else(|| DiffError::InvalidPath(path.clone()))?;
                n.element.set_attr(key, value.clone());
                Ok(())
            }
            EditOp::Move { path, parent, pos } => {
                let node = self.detach(path)?;
                self.attach(parent, *pos, node)
            }
        }
    }

    pub fn apply_all(&mut self, script: &EditScript) -> Result<(), DiffError> {
        script.ops.iter().try_for_each(|op| self.apply(op))
    }
}

/// Applies `script` to a copy of `doc`.
pub fn apply_script(doc: &Document, script: &EditScript) -> Result<Document, DiffError> {
    let mut tree: TaggedTree<()> = TaggedTree::untagged(&doc.root);
    tree.apply_all(script)?;
    let mut out = Document::new(doc.uri.clone(), tree.to_element());
    out.version = doc.version;
    Ok(out)
}
