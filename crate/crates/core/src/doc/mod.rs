//! In-memory model of the OMDoc subset: typed content elements in an
//! ordered tree, addressed by `xml:id` or by child-index path.

mod xml;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use xml::escape_into;
pub use xml::{id_spans, parse_omdoc, serialize_omdoc};

/// Attribute key under which an element's `xml:id` is exposed.
pub const XML_ID: &str = "xml:id";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error("malformed XML at {line}:{column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("unknown element <{name}> at {line}:{column}")]
    UnknownElement {
        name: String,
        line: u32,
        column: u32,
    },
    #[error("duplicate xml:id `{0}`")]
    DuplicateId(String),
    #[error("document root must be a theory, found {0}")]
    InvalidRoot(ElementKind),
    #[error("{kind} element is missing required attribute `{attribute}`")]
    MissingAttribute {
        kind: ElementKind,
        attribute: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    Theory,
    Imports,
    Symbol,
    Definition,
    Omtext,
    Cmp,
    Paragraph,
    Term,
    Assertion,
    Proof,
    ProofStep,
    Justification,
    Premise,
    Text,
}

impl ElementKind {
    pub const ALL: [ElementKind; 14] = [
        ElementKind::Theory,
        ElementKind::Imports,
        ElementKind::Symbol,
        ElementKind::Definition,
        ElementKind::Omtext,
        ElementKind::Cmp,
        ElementKind::Paragraph,
        ElementKind::Term,
        ElementKind::Assertion,
        ElementKind::Proof,
        ElementKind::ProofStep,
        ElementKind::Justification,
        ElementKind::Premise,
        ElementKind::Text,
    ];

    /// XML element name. `Text` has none; it is raw character data.
    pub fn tag(self) -> &'static str {
        match self {
            ElementKind::Theory => "theory",
            ElementKind::Imports => "imports",
            ElementKind::Symbol => "symbol",
            ElementKind::Definition => "definition",
            ElementKind::Omtext => "omtext",
            ElementKind::Cmp => "CMP",
            ElementKind::Paragraph => "p",
            ElementKind::Term => "term",
            ElementKind::Assertion => "assertion",
            ElementKind::Proof => "proof",
            ElementKind::ProofStep => "derive",
            ElementKind::Justification => "method",
            ElementKind::Premise => "premise",
            ElementKind::Text => "#text",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        ElementKind::ALL
            .into_iter()
            .find(|k| *k != ElementKind::Text && k.tag() == tag)
    }

    /// Name of the syntax node type this kind maps to in the typed graph.
    pub fn type_name(self) -> &'static str {
        match self {
            ElementKind::Theory => "Theory",
            ElementKind::Imports => "Imports",
            ElementKind::Symbol => "Symbol",
            ElementKind::Definition => "Definition",
            ElementKind::Omtext => "Omtext",
            ElementKind::Cmp => "CMP",
            ElementKind::Paragraph => "Paragraph",
            ElementKind::Term => "Term",
            ElementKind::Assertion => "Assertion",
            ElementKind::Proof => "Proof",
            ElementKind::ProofStep => "ProofStep",
            ElementKind::Justification => "Justification",
            ElementKind::Premise => "Premise",
            ElementKind::Text => "Text",
        }
    }

    pub fn from_type_name(name: &str) -> Option<Self> {
        ElementKind::ALL.into_iter().find(|k| k.type_name() == name)
    }

    /// Prose containers keep whitespace-only text runs as content.
    pub fn is_prose(self) -> bool {
        matches!(
            self,
            ElementKind::Cmp
                | ElementKind::Paragraph
                | ElementKind::Term
                | ElementKind::Premise
                | ElementKind::Justification
        )
    }

    /// Statement-level elements own the references nested inside them.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            ElementKind::Theory
                | ElementKind::Imports
                | ElementKind::Symbol
                | ElementKind::Definition
                | ElementKind::Omtext
                | ElementKind::Assertion
                | ElementKind::Proof
                | ElementKind::ProofStep
        )
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.type_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentElement {
    pub kind: ElementKind,
    pub id: Option<String>,
    pub attributes: BTreeMap<String, String>,
    pub children: Vec<ContentElement>,
    pub text: Option<String>,
}

impl ContentElement {
    pub fn new(kind: ElementKind) -> Self {
        ContentElement {
            kind,
            id: None,
            attributes: BTreeMap::new(),
            children: Vec::new(),
            text: None,
        }
    }

    pub fn text(payload: impl Into<String>) -> Self {
        ContentElement {
            text: Some(payload.into()),
            ..ContentElement::new(ElementKind::Text)
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn with_child(mut self, child: ContentElement) -> Self {
        self.children.push(child);
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        if key == XML_ID {
            return self.id.as_deref();
        }
        self.attributes.get(key).map(String::as_str)
    }

    /// Sets an attribute, routing `xml:id` to the id field. `None` removes it.
    pub fn set_attr(&mut self, key: &str, value: Option<String>) {
        if key == XML_ID {
            self.id = value;
        } else if let Some(v) = value {
            self.attributes.insert(key.to_string(), v);
        } else {
            self.attributes.remove(key);
        }
    }

    /// All attributes including `xml:id`, in lexicographic key order.
    pub fn all_attributes(&self) -> BTreeMap<&str, &str> {
        let mut all: BTreeMap<&str, &str> = self
            .attributes
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        if let Some(id) = &self.id {
            all.insert(XML_ID, id);
        }
        all
    }

    pub fn is_text(&self) -> bool {
        self.kind == ElementKind::Text
    }

    /// Concatenated character data of this subtree.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out
    }

    fn collect_text(&self, out: &mut String) {
        if let Some(t) = &self.text {
            out.push_str(t);
        }
        for c in &self.children {
            c.collect_text(out);
        }
    }

    /// Number of elements in this subtree, including `self`.
    pub fn size(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(ContentElement::size)
            .sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    pub fn find_by_id(&self, id: &str) -> Option<&ContentElement> {
        self.descendants().find(|e| e.id.as_deref() == Some(id))
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&ContentElement> {
        let mut cur = self;
        for &i in path {
            cur = cur.children.get(i)?;
        }
        Some(cur)
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut ContentElement> {
        let mut cur = self;
        for &i in path {
            cur = cur.children.get_mut(i)?;
        }
        Some(cur)
    }

    /// Path of the first element carrying `id`, in pre-order.
    pub fn path_of_id(&self, id: &str) -> Option<Vec<usize>> {
        fn go(e: &ContentElement, id: &str, path: &mut Vec<usize>) -> bool {
            if e.id.as_deref() == Some(id) {
                return true;
            }
            for (i, c) in e.children.iter().enumerate() {
                path.push(i);
                if go(c, id, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let mut path = Vec::new();
        go(self, id, &mut path).then_some(path)
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a ContentElement>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a ContentElement;

    fn next(&mut self) -> Option<Self::Item> {
        let e = self.stack.pop()?;
        self.stack.extend(e.children.iter().rev());
        Some(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub uri: String,
    pub root: ContentElement,
    pub version: u64,
}

impl Document {
    pub fn new(uri: impl Into<String>, root: ContentElement) -> Self {
        Document {
            uri: uri.into(),
            root,
            version: 0,
        }
    }

    /// Tree equality, ignoring uri and version.
    pub fn structurally_eq(&self, other: &Document) -> bool {
        self.root == other.root
    }

    pub fn element_by_id(&self, id: &str) -> Option<&ContentElement> {
        self.root.find_by_id(id)
    }

    pub fn elements(&self) -> Descendants<'_> {
        self.root.descendants()
    }

    pub fn element_count(&self) -> usize {
        self.root.size()
    }

    /// Checks the document invariants: theory root, unique ids, and the
    /// attributes required on definitions and terms.
    pub fn validate(&self) -> Result<(), DocError> {
        if self.root.kind != ElementKind::Theory {
            return Err(DocError::InvalidRoot(self.root.kind));
        }
        let mut seen = HashSet::new();
        for e in self.elements() {
            if let Some(id) = &e.id {
                if !seen.insert(id.as_str()) {
                    return Err(DocError::DuplicateId(id.clone()));
                }
            }
            check_required(e)?;
        }
        Ok(())
    }
}

fn check_required(e: &ContentElement) -> Result<(), DocError> {
    let required: &[&'static str] = match e.kind {
        ElementKind::Definition => &["for"],
        ElementKind::Term => &["cd", "name"],
        _ => &[],
    };
    for attribute in required {
        if e.attr(attribute).is_none() {
            return Err(DocError::MissingAttribute {
                kind: e.kind,
                attribute,
            });
        }
    }
    Ok(())
}
