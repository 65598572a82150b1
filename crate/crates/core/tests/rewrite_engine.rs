use std::sync::Arc;

use flexicia_core::graph::{EdgeSignature, Layer, Schema, TypedGraph, SEMANTIC_ROOT, SYNTAX_ROOT};

use flexicia_core::metamodel::{self, messages};
use flexicia_core::rewrite::{
    apply, matches, parse_rules, run_strategy, Action, RewriteError, RuleError, RuleSet,
};

fn toy_schema() -> Arc<Schema> {
    let mut s = Schema::new();
    s.add_node_type("Item", SYNTAX_ROOT).unwrap();
    s.add_node_type("Thing", SEMANTIC_ROOT).unwrap();
    let sig = |source, target| EdgeSignature { source, target };
    s.add_edge_type("link", None, sig(Layer::Syntax, Layer::Syntax))
        .unwrap();
    s.add_edge_type("origin", None, sig(Layer::Semantic, Layer::Syntax))
        .unwrap();
    Arc::new(s)
}

fn toy_rules(src: &str) -> RuleSet {
    RuleSet::new([parse_rules(src, &toy_schema()).unwrap()]).unwrap()
}

fn items(n: usize) -> TypedGraph {
    let mut g = TypedGraph::new(toy_schema());
    for i in 0..n {
        g.add_node("Item", [("n", i.to_string())]).unwrap();
    }
    g
}

const MIRROR: &str = r#"
rule FindNewThing {
  match { x: Item; }
  nac   { t: Thing; t -origin-> x; }
  produce { t: Thing; t -origin-> x; }
  apply { t.status = "added"; t.n = x.n; }
}

rule ConfirmThing {
  match { x: Item; t: Thing; t -origin-> x; }
  pac   { t.status == "deleted"; }
  apply { t.status = "preserved"; }
}

rule Forget {
  match { t: Thing; t.status != "deleted"; }
  apply { t.status = "deleted"; }
}

strategy {
  phase reset exhaust [Forget] max 100;
  phase find exhaust [ConfirmThing, FindNewThing] max 100;
}
"#;

#[test]
fn bundled_packs_parse() {
    let set = metamodel::default_rules();
    assert!(!set.strategy().phases.is_empty());
    let rule = set.rule("FindNewDefinition").unwrap();
    assert_eq!(rule.nacs.len(), 1);
    let nac = &rule.nacs[0];
    assert_eq!(nac.nodes.len() - rule.lhs.nodes.len(), 1);
    assert_eq!(nac.edges.len(), 1);
    let sets = rule
        .actions
        .iter()
        .filter(|a| matches!(a, Action::Set { .. }))
        .count();
    let calls: Vec<_> = rule
        .actions
        .iter()
        .filter_map(|a| match a {
            Action::Call { rule, .. } => Some(rule.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(sets, 2);
    assert_eq!(calls, ["detectOMTextDefiniendum", "detectCMP"]);
}

#[test]
fn unknown_call_target_is_named() {
    let src = "rule a { match { x: Item; } apply { call nope(x); } }";
    match parse_rules(src, &toy_schema()) {
        Err(e @ RuleError::UnknownRule { .. }) => assert!(e.to_string().contains("nope")),
        other => panic!("expected an unknown rule error, got {other:?}"),
    }
}

#[test]
fn empty_file_is_empty() {
    let f = parse_rules("  // nothing here\n", &toy_schema()).unwrap();
    assert!(f.rules.is_empty());
    assert!(f.strategy.phases.is_empty());
}

#[test]
fn errors_carry_positions() {
    match parse_rules("rule a {\n  match { x Item; } }", &toy_schema()) {
        Err(RuleError::Syntax { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_rules("rule a { match { x: Widget; } }", &toy_schema()),
        Err(RuleError::UnknownNodeType { .. })
    ));
    assert!(matches!(
        parse_rules(
            "rule a { match { x: Item; y: Item; x -knows-> y; } }",
            &toy_schema()
        ),
        Err(RuleError::UnknownEdgeType { .. })
    ));
    // origin goes from the semantic layer to the syntax layer only
    assert!(parse_rules(
        "rule a { match { x: Item; t: Thing; x -origin-> t; } }",
        &toy_schema()
    )
    .is_err());
    let dup = "rule a { match { x: Item; } } rule a { match { x: Item; } }";
    assert!(matches!(
        parse_rules(dup, &toy_schema()).and_then(|f| RuleSet::new([f])),
        Err(RuleError::DuplicateRule { .. })
    ));
}

#[test]
fn nac_blocks_repeat_creation() {
    let set = toy_rules(MIRROR);
    let mut g = items(3);
    let report = run_strategy(&set, &mut g).unwrap();
    assert_eq!(report.rewrites(), 3);
    let things = g.nodes_of_type("Thing");
    assert_eq!(things.len(), 3);
    for t in &things {
        assert_eq!(g.attr(*t, "status"), Some("added"));
    }
    assert!(matches(set.rule("FindNewThing").unwrap(), &g).is_empty());
}

#[test]
fn pac_confirms_existing_nodes() {
    let set = toy_rules(MIRROR);
    let mut g = items(2);
    run_strategy(&set, &mut g).unwrap();
    let before = g.nodes_of_type("Thing");
    let report = run_strategy(&set, &mut g).unwrap();
    assert_eq!(g.nodes_of_type("Thing"), before);
    for t in &before {
        assert_eq!(g.attr(*t, "status"), Some("preserved"));
    }
    // reset flips two nodes, confirmation flips them back
    assert_eq!(report.rewrites(), 4);
    // a third run is the same as the second
    let dump = g.dump();
    run_strategy(&set, &mut g).unwrap();
    assert_eq!(g.dump(), dump);
}

#[test]
fn runaway_phase_hits_budget() {
    let src = r#"
rule Grow {
  match { x: Item; }
  produce { y: Item; x -link-> y; }
}
strategy { phase grow exhaust [Grow] max 100; }
"#;
    let set = toy_rules(src);
    let mut g = items(1);
    assert_eq!(
        run_strategy(&set, &mut g).unwrap_err(),
        RewriteError::TerminationBudgetExceeded {
            phase: "grow".into(),
            budget: 100
        }
    );
    assert_eq!(g.node_count(), 101);
    let mut tight = set.clone();
    tight.set_budget(5);
    let mut g = items(1);
    assert!(matches!(
        run_strategy(&tight, &mut g),
        Err(RewriteError::TerminationBudgetExceeded { budget: 5, .. })
    ));
}

#[test]
fn identity_rule_leaves_graph_unchanged() {
    let set = toy_rules("rule Id { match { x: Item; y: Item; x -link-> y; } }");
    let mut g = items(2);
    g.add_edge("link", 1, 2).unwrap();
    let before = g.dump();
    let rule = set.rule("Id").unwrap();
    let b = matches(rule, &g);
    assert_eq!(b, vec![vec![1, 2]]);
    let report = apply(&set, rule, &b[0], &mut g).unwrap();
    assert_eq!(report.rewrites(), 1);
    assert_eq!(g.dump(), before);
}

#[test]
fn stale_bindings_are_rejected() {
    let set = toy_rules("rule Id { match { x: Item; y: Item; x -link-> y; } }");
    let mut g = items(2);
    let rule = set.rule("Id").unwrap();
    assert!(matches!(
        apply(&set, rule, &[1, 2], &mut g),
        Err(RewriteError::StaleBinding(_))
    ));
}

#[test]
fn runaway_calls_are_cut_off() {
    let src = r#"rule Loop { match { x: Item; } apply { call Loop(x); } }"#;
    let set = toy_rules(src);
    let mut g = items(1);
    let rule = set.rule("Loop").unwrap();
    assert!(matches!(
        apply(&set, rule, &[1], &mut g),
        Err(RewriteError::CallDepthExceeded(_))
    ));
}

#[test]
fn calls_are_seeded_with_their_arguments() {
    let src = r#"
rule Tag {
  match { x: Item; x.n == "0"; }
  apply { call Mark(x); }
}
rule Mark {
  match { x: Item; y: Item; x -link-> y; y.mark == ""; }
  apply { y.mark = "yes"; }
}
"#;
    let set = toy_rules(src);
    let mut g = items(4);
    g.add_edge("link", 1, 2).unwrap();
    g.add_edge("link", 1, 3).unwrap();
    g.add_edge("link", 4, 2).unwrap();
    let rule = set.rule("Tag").unwrap();
    let report = apply(&set, rule, &[1], &mut g).unwrap();
    // Tag itself plus one Mark per successor of node 1
    assert_eq!(report.rewrites(), 3);
    assert_eq!(g.attr(2, "mark"), Some("yes"));
    assert_eq!(g.attr(3, "mark"), Some("yes"));
    assert_eq!(g.attr(4, "mark"), None);
}

/// A definition paragraph with one definiendum and one other term.
fn definition_graph() -> TypedGraph {
    let mut g = TypedGraph::new(metamodel::schema());
    let th = g
        .add_node("Theory", [("xml:id", "trees"), ("_doc", "trees")])
        .unwrap();
    let def = g
        .add_node(
            "Omtext",
            [
                ("type", "definition"),
                ("xml:id", "tree.def"),
                ("_fp", "f1"),
                ("_doc", "trees"),
            ],
        )
        .unwrap();
    let cmp = g.add_node("CMP", [("_doc", "trees")]).unwrap();
    let p = g.add_node("Paragraph", [("_doc", "trees")]).unwrap();
    let dfn = g
        .add_node(
            "Term",
            [
                ("role", "definiendum"),
                ("name", "tree"),
                ("cd", "trees"),
                ("xml:id", "tree.def.t1"),
            ],
        )
        .unwrap();
    let other = g
        .add_node("Term", [("name", "graph"), ("cd", "graphs")])
        .unwrap();
    for (a, b) in [(th, def), (def, cmp), (cmp, p), (p, dfn), (p, other)] {
        g.add_edge("child", a, b).unwrap();
    }
    for n in [cmp, p, dfn, other] {
        g.add_edge("owner", n, def).unwrap();
    }
    g.add_edge("owner", def, th).unwrap();
    g
}

#[test]
fn definition_rules_on_small_graph() {
    let set = metamodel::default_rules();
    let mut g = definition_graph();
    assert_eq!(g.node_count(), 6);
    let rule = set.rule("FindNewDefinition").unwrap();
    let b = matches(rule, &g);
    assert_eq!(b.len(), 1);
    apply(&set, rule, &b[0], &mut g).unwrap();

    let defs = g.nodes_of_type(metamodel::SEM_DEFINITION);
    assert_eq!(defs.len(), 1);
    let od = defs[0];
    assert_eq!(g.attr(od, "status"), Some("added"));
    assert_eq!(g.attr(od, "xmlid"), Some("tree.def"));
    assert_eq!(g.successors(od, metamodel::ORIGIN), vec![2]);

    let syms = g.nodes_of_type(metamodel::SEM_SYMBOL);
    assert_eq!(syms.len(), 1, "only the definiendum becomes a symbol");
    assert_eq!(g.attr(syms[0], "name"), Some("tree"));
    assert_eq!(g.successors(od, metamodel::DEFINES), syms);
    // detectCMP does not fire on a fresh definition
    assert_eq!(g.attr(od, "bodyChanged"), None);

    assert!(matches(rule, &g).is_empty());
}

#[test]
fn rule_packs_use_the_message_table() {
    let all: String = metamodel::rule_packs().iter().map(|(_, s)| *s).collect();
    for m in messages::ALL {
        assert!(all.contains(&format!("\"{m}\"")), "unused message {m}");
    }
    for line in all.lines().filter(|l| l.contains(".desc =")) {
        let lit = line.split('"').nth(1).unwrap();
        assert!(messages::ALL.contains(&lit), "unlisted message {lit}");
    }
}

#[test]
fn find_new_find_existing_and_propagation_post_states() {
    let set = metamodel::default_rules();
    let mut g = TypedGraph::new(metamodel::schema());
    let d = g
        .add_node(
            "Omtext",
            [("type", "definition"), ("xml:id", "bt.def"), ("_fp", "f1")],
        )
        .unwrap();
    let t = g
        .add_node(
            "Term",
            [("role", "definiendum"), ("name", "bt"), ("xml:id", "bt.t")],
        )
        .unwrap();
    g.add_edge("owner", t, d).unwrap();

    // find-new: status added, xmlid copied from the attribute node
    let find_new = set.rule("FindNewDefinition").unwrap();
    let b = matches(find_new, &g);
    assert_eq!(b.len(), 1);
    apply(&set, find_new, &b[0], &mut g).unwrap();
    let od = g.nodes_of_type(metamodel::SEM_DEFINITION)[0];
    assert_eq!(g.attr(od, "status"), Some("added"));
    assert_eq!(g.attr(od, "xmlid"), Some("bt.def"));
    assert!(matches(find_new, &g).is_empty());

    // find-existing is gated on the deleted status
    let find_existing = set.rule("FindExistingDefinition").unwrap();
    assert!(matches(find_existing, &g).is_empty());
    g.set_attr(od, "status", "deleted").unwrap();
    let b = matches(find_existing, &g);
    assert_eq!(b.len(), 1);
    apply(&set, find_existing, &b[0], &mut g).unwrap();
    assert_eq!(g.attr(od, "status"), Some("preserved"));

    // propagation: one impact on the user of the changed definition
    let user = g
        .add_node(metamodel::SEM_ASSERTION, [("status", "preserved")])
        .unwrap();
    g.add_edge(metamodel::USES, user, od).unwrap();
    let cause = g
        .add_node(
            metamodel::DEFINITION_CHANGED,
            [("desc", messages::DEFINITION_CHANGED)],
        )
        .unwrap();
    g.add_edge(metamodel::IMPACT, cause, od).unwrap();
    assert_eq!(g.node_count(), 6);

    let propagate = set.rule("PropagateChangedDefinition").unwrap();
    let b = matches(propagate, &g);
    assert_eq!(b.len(), 1);
    let report = apply(&set, propagate, &b[0], &mut g).unwrap();
    let created = g.nodes_of_type(metamodel::DEPENDENCY_CHANGED);
    assert_eq!(created.len(), 1);
    let l = created[0];
    assert_eq!(g.attr(l, "desc"), Some("Used target definition changed"));
    assert_eq!(g.successors(l, metamodel::IMPACT), vec![user]);
    assert_eq!(g.successors(l, metamodel::DEPENDS_ON_IMPACT), vec![cause]);
    assert_eq!(report.emits.len(), 1);
    assert_eq!(report.emits[0].text, "Used target definition changed");
    assert!(
        matches(propagate, &g).is_empty(),
        "the NAC blocks a second impact"
    );
}
