use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ContentElement, DocError, Document, ElementKind};

const XML_NAMESPACE: &str = "http://www.w3.org/XML/1998/namespace";

/// Parses an `.omdoc` file. The returned document has an empty uri.
pub fn parse_omdoc(src: &str) -> Result<Document, DocError> {
    let xml = roxmltree::Document::parse(src).map_err(|e| {
        let pos = e.pos();
        DocError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = convert(&xml, xml.root_element())?;
    let doc = Document::new("", root);
    doc.validate()?;
    Ok(doc)
}

fn convert(
    xml: &roxmltree::Document<'_>,
    node: roxmltree::Node<'_, '_>,
) -> Result<ContentElement, DocError> {
    let name = node.tag_name().name();
    let kind = ElementKind::from_tag(name).ok_or_else(|| {
        let pos = xml.text_pos_at(node.range().start);
        DocError::UnknownElement {
            name: name.to_string(),
            line: pos.row,
            column: pos.col,
        }
    })?;
    let mut el = ContentElement::new(kind);
    for a in node.attributes() {
        let key = match a.namespace() {
            Some(XML_NAMESPACE) => format!("xml:{}", a.name()),
            _ => a.name().to_string(),
        };
        el.set_attr(&key, Some(a.value().to_string()));
    }

    // Whitespace between elements is layout unless the element is prose or
    // carries real character data, in which case every run is content.
    let mixed = kind.is_prose()
        || node
            .children()
            .any(|c| c.is_text() && !c.text().unwrap_or("").trim().is_empty());
    for child in node.children() {
        if child.is_element() {
            el.children.push(convert(xml, child)?);
        } else if child.is_text() && mixed {
            let text = child.text().unwrap_or("");
            // adjacent runs can appear around comments
            match el.children.last_mut() {
                Some(prev) if prev.is_text() => {
                    prev.text.get_or_insert_with(String::new).push_str(text);
                }
                _ => el.children.push(ContentElement::text(text)),
            }
        }
    }
    Ok(el)
}

/// Byte ranges of every element carrying an `xml:id` in an `.omdoc` source.
pub fn id_spans(src: &str) -> BTreeMap<String, (usize, usize)> {
    let mut out = BTreeMap::new();
    let Ok(xml) = roxmltree::Document::parse(src) else {
        return out;
    };
    for node in xml.descendants().filter(|n| n.is_element()) {
        if let Some(id) = node.attribute((XML_NAMESPACE, "id")) {
            let r = node.range();
            out.insert(id.to_string(), (r.start, r.end - r.start));
        }
    }
    out
}

/// Serializes with attributes in lexicographic order. Element-only content
/// is indented; mixed content is written verbatim.
pub fn serialize_omdoc(doc: &Document) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_element(&doc.root, 0, true, &mut out);
    out.push('\n');
    out
}

fn write_element(e: &ContentElement, depth: usize, indent: bool, out: &mut String) {
    if e.is_text() {
        escape_into(e.text.as_deref().unwrap_or(""), false, out);
        return;
    }
    if indent {
        out.push_str(&"  ".repeat(depth));
    }
    out.push('<');
    out.push_str(e.kind.tag());
    for (k, v) in e.all_attributes() {
        let _ = write!(out, " {k}=\"");
        escape_into(v, true, out);
        out.push('"');
    }
    if e.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    let mixed = e.kind.is_prose() || e.children.iter().any(ContentElement::is_text);
    if mixed || !indent {
        for c in &e.children {
            write_element(c, depth + 1, false, out);
        }
    } else {
        for c in &e.children {
            out.push('\n');
            write_element(c, depth + 1, true, out);
        }
        out.push('\n');
        out.push_str(&"  ".repeat(depth));
    }
    let _ = write!(out, "</{}>", e.kind.tag());
}

pub(crate) fn escape_into(s: &str, attr: bool, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            '\n' if attr => out.push_str("&#10;"),
            '\t' if attr => out.push_str("&#9;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(ch),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::XML_ID;

    const MONOID: &str = r#"<theory xml:id="monoids">
<symbol name="unit" xml:id="unit"/>
<definition xml:id="mon-d1" for="unit" type="informal">
 <CMP>
  A structure $(M,*,e)$, in which $(M,*)$ is a semi-group with unit $e$ is called monoid.
 </CMP>
</definition>
</theory>"#;

    const BINARY_TREE_DEF: &str = r##"<theory xmlns="http://omdoc.org/ns" xml:id="balanced-binary-trees">
<omtext type="definition" xml:id="binary-tree.def" about="#binary-tree.def">
 <CMP xml:id="binary-tree.def.CMP1" about="#binary-tree.def.CMP1">
  <p xml:id="binary-tree.def.CMP1.p1" about="#binary-tree.def.CMP1.p1">
   A <term cd="balanced-binary-trees" name="binary-tree" role="definiendum">
   binary tree</term> is a <term cd="trees" name="tree"
   xml:id="binary-tree.def.CMP2.p1.term2"
   about="#binary-tree.def.CMP2.p1.term2">tree</term> where all $\ldots$
  </p>
 </CMP>
</omtext>
</theory>"##;

    #[test]
    fn attribute_form_definition() {
        let doc = parse_omdoc(MONOID).unwrap();
        let kinds: Vec<_> = doc.root.children.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![ElementKind::Symbol, ElementKind::Definition]);
        assert_eq!(doc.root.children[0].attr("name"), Some("unit"));
        assert_eq!(doc.root.children[1].attr("for"), Some("unit"));
        // CMP holds one opaque text run
        let cmp = &doc.root.children[1].children[0];
        assert_eq!(cmp.kind, ElementKind::Cmp);
        assert_eq!(cmp.children.len(), 1);
        assert!(cmp.children[0]
            .text
            .as_deref()
            .unwrap()
            .contains("$(M,*,e)$"));
    }

    #[test]
    fn omtext_form_definition() {
        let doc = parse_omdoc(BINARY_TREE_DEF).unwrap();
        let def = doc.element_by_id("binary-tree.def").unwrap();
        assert_eq!(def.kind, ElementKind::Omtext);
        assert_eq!(def.attr("type"), Some("definition"));
        assert_eq!(def.attr("about"), Some("#binary-tree.def"));
        let terms: Vec<_> = def
            .descendants()
            .filter(|e| e.kind == ElementKind::Term)
            .collect();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].attr("role"), Some("definiendum"));
        assert_eq!(terms[0].attr("name"), Some("binary-tree"));
        assert_eq!(terms[1].attr("cd"), Some("trees"));
        assert_eq!(terms[1].attr("name"), Some("tree"));
        assert_eq!(terms[1].attr(XML_ID), Some("binary-tree.def.CMP2.p1.term2"));
    }

    #[test]
    fn empty_theory() {
        let doc = parse_omdoc(r#"<theory xml:id="t"/>"#).unwrap();
        assert_eq!(doc.root.kind, ElementKind::Theory);
        assert_eq!(doc.root.id.as_deref(), Some("t"));
        assert!(doc.root.children.is_empty());
    }

    #[test]
    fn errors_carry_position_and_names() {
        match parse_omdoc("<theory>\n  <symbol></theory>") {
            Err(DocError::Xml { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected xml error, got {other:?}"),
        }
        match parse_omdoc("<theory>\n <frobnicate/></theory>") {
            Err(DocError::UnknownElement { name, line, column }) => {
                assert_eq!(name, "frobnicate");
                assert_eq!((line, column), (2, 2));
            }
            other => panic!("expected unknown element, got {other:?}"),
        }
        assert_eq!(
            parse_omdoc(r#"<theory xml:id="a"><symbol xml:id="a" name="x"/></theory>"#),
            Err(DocError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn attributes_are_sorted_on_output() {
        let root = ContentElement::new(ElementKind::Theory)
            .with_attr("b", "2")
            .with_attr("a", "1");
        let out = serialize_omdoc(&Document::new("x", root));
        assert!(out.contains(r#"<theory a="1" b="2"/>"#), "{out}");
    }

    #[test]
    fn round_trips_listings() {
        for src in [MONOID, BINARY_TREE_DEF] {
            let doc = parse_omdoc(src).unwrap();
            let again = parse_omdoc(&serialize_omdoc(&doc)).unwrap();
            assert!(doc.structurally_eq(&again));
        }
    }

    #[test]
    fn escapes_special_characters() {
        let root = ContentElement::new(ElementKind::Theory)
            .with_attr("title", "a \"b\" <c>\n&")
            .with_child(
                ContentElement::new(ElementKind::Paragraph)
                    .with_child(ContentElement::text("x < y && z > 0\r\n  ")),
            );
        let doc = Document::new("x", root);
        let again = parse_omdoc(&serialize_omdoc(&doc)).unwrap();
        assert!(doc.structurally_eq(&again));
    }

    #[test]
    fn spans_locate_identified_elements() {
        let spans = id_spans(BINARY_TREE_DEF);
        let (start, len) = spans["binary-tree.def.CMP1.p1"];
        assert!(BINARY_TREE_DEF[start..start + len].starts_with("<p xml:id"));
        assert!(spans.contains_key("balanced-binary-trees"));
    }
}
