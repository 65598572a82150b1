//! The backtracking matcher must agree with naive enumeration of every
//! injective assignment, including the order of results.

use std::sync::Arc;

use flexicia_core::graph::{
    Condition, EdgeSignature, Layer, NodeId, Operand, Pattern, Schema, TypedGraph, SEMANTIC_ROOT,
    STATUS, SYNTAX_ROOT,
};
use proptest::prelude::*;

const SEM_TYPES: [&str; 3] = ["TheoryObject", "SemDefinition", "SemProof"];
const SYN_TYPES: [&str; 2] = ["Omtext", "Term"];
const PATTERN_TYPES: [&str; 7] = [
    SEMANTIC_ROOT,
    SYNTAX_ROOT,
    "TheoryObject",
    "SemDefinition",
    "SemProof",
    "Omtext",
    "Term",
];
const EDGE_TYPES: [&str; 3] = ["uses", "justifies", "origin"];
const VALUES: [&str; 3] = ["a", "b", "c"];

fn schema() -> Arc<Schema> {
    let mut s = Schema::new();
    s.add_node_type("TheoryObject", SEMANTIC_ROOT).unwrap();
    s.add_node_type("SemDefinition", "TheoryObject").unwrap();
    s.add_node_type("SemProof", "TheoryObject").unwrap();
    s.add_node_type("Omtext", SYNTAX_ROOT).unwrap();
    s.add_node_type("Term", SYNTAX_ROOT).unwrap();
    let ss = EdgeSignature {
        source: Layer::Semantic,
        target: Layer::Semantic,
    };
    s.add_edge_type("uses", None, ss).unwrap();
    s.add_edge_type("justifies", None, ss).unwrap();
    s.add_edge_type(
        "origin",
        None,
        EdgeSignature {
            source: Layer::Semantic,
            target: Layer::Syntax,
        },
    )
    .unwrap();
    Arc::new(s)
}

#[derive(Debug, Clone)]
struct Spec {
    nodes: Vec<(bool, usize, usize)>,
    edges: Vec<(usize, usize, usize)>,
}

fn graph_spec() -> impl Strategy<Value = Spec> {
    (1usize..=30).prop_flat_map(|n| {
        (
            prop::collection::vec((any::<bool>(), 0usize..3, 0usize..3), n),
            prop::collection::vec((0usize..3, 0..n, 0..n), 0..=2 * n),
        )
            .prop_map(|(nodes, edges)| Spec { nodes, edges })
    })
}

fn build(spec: &Spec) -> TypedGraph {
    let mut g = TypedGraph::new(schema());
    for &(semantic, t, v) in &spec.nodes {
        let id = if semantic {
            g.add_node(SEM_TYPES[t], [(STATUS, "added"), ("k", VALUES[v])])
        } else {
            g.add_node(SYN_TYPES[t % 2], [("k", VALUES[v])])
        };
        id.unwrap();
    }
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    for &(t, s, d) in &spec.edges {
        // signature violations are expected and simply skipped
        let _ = g.add_edge(EDGE_TYPES[t], ids[s], ids[d]);
    }
    g
}

#[derive(Debug, Clone)]
enum CondSpec {
    Lit(usize, usize, bool),
    Pair(usize, usize, bool),
    Present(usize, bool),
}

type PatternSpec = (Vec<usize>, Vec<(usize, usize, usize)>, Vec<CondSpec>);

fn pattern_spec() -> impl Strategy<Value = PatternSpec> {
    (1usize..=3).prop_flat_map(|k| {
        (
            prop::collection::vec(0usize..PATTERN_TYPES.len(), k),
            prop::collection::vec((0usize..3, 0..k, 0..k), 0..=3),
            prop::collection::vec(
                prop_oneof![
                    (0..k, 0usize..3, any::<bool>()).prop_map(|(v, l, eq)| CondSpec::Lit(v, l, eq)),
                    (0..k, 0..k, any::<bool>()).prop_map(|(a, b, eq)| CondSpec::Pair(a, b, eq)),
                    (0..k, any::<bool>()).prop_map(|(v, real)| CondSpec::Present(v, real)),
                ],
                0..=2,
            ),
        )
    })
}

fn pattern(types: &[usize], edges: &[(usize, usize, usize)], conds: &[CondSpec]) -> Pattern {
    let mut p = Pattern::new();
    for (i, t) in types.iter().enumerate() {
        p = p.node(&format!("v{i}"), PATTERN_TYPES[*t]);
    }
    for &(t, s, d) in edges {
        p = p.edge(EDGE_TYPES[t], &format!("v{s}"), &format!("v{d}"));
    }
    for c in conds {
        let attr = |var: usize| Operand::Attr {
            var,
            key: "k".into(),
        };
        let cond = match *c {
            CondSpec::Lit(v, l, true) => Condition::Eq(attr(v), Operand::Lit(VALUES[l].into())),
            CondSpec::Lit(v, l, false) => Condition::Ne(attr(v), Operand::Lit(VALUES[l].into())),
            CondSpec::Pair(a, b, true) => Condition::Eq(attr(a), attr(b)),
            CondSpec::Pair(a, b, false) => Condition::Ne(attr(a), attr(b)),
            CondSpec::Present(var, real) => Condition::Present {
                var,
                key: if real { "k" } else { "missing" }.into(),
            },
        };
        p = p.condition(cond);
    }
    p
}

fn operand(g: &TypedGraph, o: &Operand, b: &[NodeId]) -> String {
    match o {
        Operand::Lit(s) => s.clone(),
        Operand::Attr { var, key } => g.attr(b[*var], key).unwrap_or("").to_string(),
    }
}

fn satisfies(g: &TypedGraph, p: &Pattern, b: &[NodeId]) -> bool {
    let schema = g.schema();
    p.nodes
        .iter()
        .zip(b)
        .all(|(pn, id)| schema.is_subtype(&g.node(*id).unwrap().ty, &pn.ty))
        && p.edges.iter().all(|e| {
            g.edges()
                .any(|x| x.ty == e.ty && x.source == b[e.source] && x.target == b[e.target])
        })
        && p.conditions.iter().all(|c| match c {
            Condition::Eq(x, y) => operand(g, x, b) == operand(g, y, b),
            Condition::Ne(x, y) => operand(g, x, b) != operand(g, y, b),
            Condition::Present { var, key } => g.node(b[*var]).unwrap().attrs.contains_key(key),
        })
}

fn brute_force(g: &TypedGraph, p: &Pattern) -> Vec<Vec<NodeId>> {
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    let k = p.nodes.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    'outer: loop {
        let b: Vec<NodeId> = idx.iter().map(|&i| ids[i]).collect();
        let injective = (0..k).all(|i| (0..i).all(|j| b[i] != b[j]));
        if injective && satisfies(g, p, &b) {
            out.push(b);
        }
        for pos in (0..k).rev() {
            idx[pos] += 1;
            if idx[pos] < ids.len() {
                continue 'outer;
            }
            idx[pos] = 0;
        }
        break;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn query_equals_enumeration(spec in graph_spec(), (types, edges, conds) in pattern_spec()) {
        let g = build(&spec);
        let p = pattern(&types, &edges, &conds);
        prop_assert_eq!(g.query(&p), brute_force(&g, &p));
    }

    #[test]
    fn identical_builds_query_identically(spec in graph_spec(), (types, edges, conds) in pattern_spec()) {
        let p = pattern(&types, &edges, &conds);
        let (a, b) = (build(&spec), build(&spec));
        prop_assert_eq!(a.dump(), b.dump());
        prop_assert_eq!(a.query(&p), b.query(&p));
    }

    #[test]
    fn every_node_has_one_root(spec in graph_spec()) {
        let g = build(&spec);
        for n in g.nodes() {
            let roots = [SYNTAX_ROOT, SEMANTIC_ROOT, flexicia_core::graph::IMPACT_ROOT]
                .iter()
                .filter(|r| g.schema().is_subtype(&n.ty, r))
                .count();
            prop_assert_eq!(roots, 1);
        }
    }
}
