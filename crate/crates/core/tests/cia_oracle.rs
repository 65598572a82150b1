//! Impacts are checked against reachability computed from the textual
//! graph dump with a boolean transitive closure.

mod common;

use std::collections::BTreeSet;

use common::oracle::*;
use common::*;
use flexicia_core::cia;
use flexicia_core::diff::SimilarityModel;
use flexicia_core::metamodel;

#[test]
fn impacts_cover_the_dependency_closure() {
    let scenarios = scenarios();
    assert!(scenarios.len() >= 6);
    for (di, src) in scenarios {
        let (mut g, docs) = ingested();
        let new = doc(&docs[di].uri, &src);
        cia::sync_document(&mut g, &docs[di], &new, &SimilarityModel::default()).unwrap();
        let run = cia::analyze(&mut g, &metamodel::default_rules()).unwrap();
        assert!(!run.impacts.is_empty());
        check_scenario(&g, &run).unwrap();
    }
}

#[test]
fn closure_matches_the_oracle() {
    let (g, _) = ingested();
    let dumped = parse_dump(&g.dump());
    for (&id, ty) in &dumped.types {
        if g.schema().layer(ty) != Some(flexicia_core::graph::Layer::Semantic) {
            continue;
        }
        let ours = cia::dependency_closure(&g, &[id]);
        let oracle = oracle_closure(&dumped, &BTreeSet::from([id]));
        assert_eq!(ours, oracle, "closure of {id}");
    }
    let bt = sem(&g, metamodel::SEM_DEFINITION, "binary-tree.def");
    assert!(!cia::dependency_closure(&g, &[bt]).is_empty());
}
