#![allow(dead_code)]

pub mod mutate;
pub mod oracle;
pub mod small_trees;

use flexicia_core::cia;
use flexicia_core::doc::Document;
use flexicia_core::graph::TypedGraph;
use flexicia_core::metamodel;
use flexicia_core::stex::parse_stex;

pub const BINARY_TREES: &str = include_str!("../../../../corpus/binary-trees/binary-trees.tex");
pub const BBT_SIZE: &str = include_str!("../../../../corpus/binary-trees/bbt-size.tex");

pub fn doc(uri: &str, src: &str) -> Document {
    let mut d = parse_stex(src).unwrap();
    d.uri = uri.to_string();
    d
}

pub fn corpus() -> Vec<Document> {
    vec![doc("binary-trees", BINARY_TREES), doc("bbt-size", BBT_SIZE)]
}

/// Corpus encoded and analysed once.
pub fn ingested() -> (TypedGraph, Vec<Document>) {
    let docs = corpus();
    let mut g = TypedGraph::new(metamodel::schema());
    for d in &docs {
        cia::encode_document(&mut g, d).unwrap();
    }
    cia::analyze(&mut g, &metamodel::default_rules()).unwrap();
    (g, docs)
}

/// The semantic node of the given type whose `xmlid` is `id`.
pub fn sem(g: &TypedGraph, ty: &str, id: &str) -> u64 {
    let found: Vec<_> = g
        .nodes_of_type(ty)
        .into_iter()
        .filter(|&n| g.attr(n, "xmlid") == Some(id))
        .collect();
    assert_eq!(found.len(), 1, "{ty} {id}: {found:?}");
    found[0]
}
