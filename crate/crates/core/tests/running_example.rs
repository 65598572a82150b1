use flexicia_core::doc::{parse_omdoc, serialize_omdoc, ElementKind};
use flexicia_core::stex::{count_semantic_references, parse_stex};

const BINARY_TREES: &str = include_str!("../../../corpus/binary-trees/binary-trees.tex");
const BBT_SIZE: &str = include_str!("../../../corpus/binary-trees/bbt-size.tex");

fn count(doc: &flexicia_core::doc::Document, kind: ElementKind) -> usize {
    doc.elements().filter(|e| e.kind == kind).count()
}

#[test]
fn definitions_module_structure() {
    let doc = parse_stex(BINARY_TREES).unwrap();
    assert_eq!(doc.root.kind, ElementKind::Theory);
    assert_eq!(doc.root.id.as_deref(), Some("binary-trees"));
    assert_eq!(count(&doc, ElementKind::Imports), 2);
    let defs: Vec<_> = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Omtext && e.attr("type") == Some("definition"))
        .collect();
    assert_eq!(defs.len(), 2);
    let definienda: Vec<_> = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Term && e.attr("role") == Some("definiendum"))
        .map(|e| e.attr("name").unwrap())
        .collect();
    assert_eq!(definienda, vec!["binary-tree", "bbt", "fullbbt"]);
    let termrefs = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Term && e.attr("role").is_none())
        .count();
    assert_eq!(termrefs, 7);
    assert_eq!(count_semantic_references(&doc), 9);
    assert_eq!(
        doc.element_by_id("binary-tree.def").map(|e| e.kind),
        Some(ElementKind::Omtext)
    );
}

#[test]
fn lemma_module_structure() {
    let doc = parse_stex(BBT_SIZE).unwrap();
    assert_eq!(doc.root.id.as_deref(), Some("bbt-size"));
    let imports: Vec<_> = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Imports)
        .collect();
    assert_eq!(imports.len(), 1);
    assert_eq!(imports[0].attr("from"), Some("binary-trees"));
    assert_eq!(count(&doc, ElementKind::Proof), 1);
    assert!(count(&doc, ElementKind::ProofStep) >= 2);
    let premises: Vec<_> = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Premise)
        .collect();
    assert_eq!(premises.len(), 1);
    assert_eq!(premises[0].attr("uri"), Some("binary-trees"));
    assert_eq!(premises[0].attr("ref"), Some("binary-tree.def"));
    let terms: Vec<_> = doc
        .elements()
        .filter(|e| e.kind == ElementKind::Term)
        .map(|e| (e.attr("cd").unwrap(), e.attr("name").unwrap()))
        .collect();
    assert_eq!(terms, vec![("binary-trees", "bbt")]);
    assert_eq!(count_semantic_references(&doc), 3);
    assert_eq!(
        doc.element_by_id("bbt-size.lemma").map(|e| e.kind),
        Some(ElementKind::Assertion)
    );
}

#[test]
fn corpus_has_twelve_references() {
    let total: usize = [BINARY_TREES, BBT_SIZE]
        .iter()
        .map(|src| count_semantic_references(&parse_stex(src).unwrap()))
        .sum();
    assert_eq!(total, 12);
}

#[test]
fn generated_omdoc_round_trips() {
    for src in [BINARY_TREES, BBT_SIZE] {
        let doc = parse_stex(src).unwrap();
        let xml = serialize_omdoc(&doc);
        let back = parse_omdoc(&xml).unwrap();
        assert!(doc.structurally_eq(&back), "{xml}");
        let again = parse_omdoc(&serialize_omdoc(&back)).unwrap();
        assert!(back.structurally_eq(&again));
    }
}
