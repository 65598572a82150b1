//! Node and edge types of the OMDoc document model, the bundled rule packs
//! and the impact descriptions they produce.

use std::sync::{Arc, OnceLock};

use crate::doc::ElementKind;
use crate::graph::{EdgeSignature, Layer, Schema, IMPACT_ROOT, SEMANTIC_ROOT, SYNTAX_ROOT};
use crate::rewrite::{parse_rules, RuleError, RuleSet};

pub const THEORY_OBJECT: &str = "TheoryObject";
pub const SEM_THEORY: &str = "SemTheory";
pub const SEM_IMPORT: &str = "SemImport";
pub const SEM_SYMBOL: &str = "SemSymbol";
pub const SEM_DEFINITION: &str = "SemDefinition";
pub const SEM_ASSERTION: &str = "SemAssertion";
pub const SEM_PROOF: &str = "SemProof";
pub const SEM_PROOF_STEP: &str = "SemProofStep";
pub const SEM_OCCURRENCE: &str = "SemOccurrence";

pub const DEFINITION_CHANGED: &str = "DefinitionChanged";
pub const DEPENDENCY_CHANGED: &str = "DependencyChanged";
pub const TARGET_DELETED: &str = "TargetDeleted";
pub const DANGLING_REFERENCE: &str = "DanglingReference";

pub const ORIGIN: &str = "origin";
pub const IMPACT: &str = "impact";
pub const USES: &str = "uses";
pub const OCCURS: &str = "occurs";
pub const IMPORTS: &str = "imports";
pub const DEFINES: &str = "defines";
pub const JUSTIFIES: &str = "justifies";
pub const DEPENDS_ON_IMPACT: &str = "dependsOnImpact";
pub const CHILD: &str = "child";
pub const OWNER: &str = "owner";

/// Edges along which a change can affect other concepts. For the first
/// three the source depends on the target; for `justifies` the target
/// depends on the source.
pub const DEPENDENCY_EDGES: [&str; 3] = [USES, OCCURS, IMPORTS];
pub const JUSTIFICATION_EDGES: [&str; 1] = [JUSTIFIES];

/// Impact descriptions. The rule packs must use exactly these strings.
pub mod messages {
    pub const DEFINITION_CHANGED: &str = "Definition changed";
    pub const USED_DEFINITION_CHANGED: &str = "Used target definition changed";
    pub const USED_DEFINITION_DELETED: &str = "Used target definition deleted";
    pub const SYMBOL_UNDEFINED: &str = "Referenced symbol no longer defined";
    pub const JUSTIFICATION_CHANGED: &str = "Justification changed";
    pub const IMPORT_CHANGED: &str = "Imported theory changed";
    pub const REFERENCED_SYMBOL_CHANGED: &str = "Referenced symbol changed";

    pub const ALL: [&str; 7] = [
        DEFINITION_CHANGED,
        USED_DEFINITION_CHANGED,
        USED_DEFINITION_DELETED,
        SYMBOL_UNDEFINED,
        JUSTIFICATION_CHANGED,
        IMPORT_CHANGED,
        REFERENCED_SYMBOL_CHANGED,
    ];
}

pub const ABSTRACTION_RULES: &str = include_str!("../rules/abstraction.gr");
pub const PROPAGATION_RULES: &str = include_str!("../rules/propagation.gr");
pub const PROJECTION_RULES: &str = include_str!("../rules/projection.gr");

/// Bundled packs as `(file name, source)`, in load order.
pub fn rule_packs() -> [(&'static str, &'static str); 3] {
    [
        ("abstraction.gr", ABSTRACTION_RULES),
        ("propagation.gr", PROPAGATION_RULES),
        ("projection.gr", PROJECTION_RULES),
    ]
}

fn build_schema() -> Schema {
    let mut s = Schema::new();
    let add = |s: &mut Schema, name: &str, sup: &str| {
        s.add_node_type(name, sup)
            .expect("metamodel types are unique");
    };
    for k in ElementKind::ALL {
        add(&mut s, k.type_name(), SYNTAX_ROOT);
    }
    add(&mut s, THEORY_OBJECT, SEMANTIC_ROOT);
    for t in [
        SEM_SYMBOL,
        SEM_DEFINITION,
        SEM_ASSERTION,
        SEM_PROOF,
        SEM_PROOF_STEP,
    ] {
        add(&mut s, t, THEORY_OBJECT);
    }
    for t in [SEM_THEORY, SEM_IMPORT, SEM_OCCURRENCE] {
        add(&mut s, t, SEMANTIC_ROOT);
    }
    add(&mut s, DEFINITION_CHANGED, IMPACT_ROOT);
    add(&mut s, DEPENDENCY_CHANGED, IMPACT_ROOT);
    add(&mut s, TARGET_DELETED, IMPACT_ROOT);
    add(&mut s, DANGLING_REFERENCE, TARGET_DELETED);

    let sig = |source, target| EdgeSignature { source, target };
    let edges = [
        (ORIGIN, sig(Layer::Semantic, Layer::Syntax)),
        (IMPACT, sig(Layer::Impact, Layer::Semantic)),
        (USES, sig(Layer::Semantic, Layer::Semantic)),
        (OCCURS, sig(Layer::Semantic, Layer::Semantic)),
        (IMPORTS, sig(Layer::Semantic, Layer::Semantic)),
        (DEFINES, sig(Layer::Semantic, Layer::Semantic)),
        (JUSTIFIES, sig(Layer::Semantic, Layer::Semantic)),
        (DEPENDS_ON_IMPACT, sig(Layer::Impact, Layer::Impact)),
        (CHILD, sig(Layer::Syntax, Layer::Syntax)),
        (OWNER, sig(Layer::Syntax, Layer::Syntax)),
    ];
    for (name, signature) in edges {
        s.add_edge_type(name, None, signature)
            .expect("metamodel edges are unique");
    }
    s
}

/// The shared OMDoc schema.
pub fn schema() -> Arc<Schema> {
    static SCHEMA: OnceLock<Arc<Schema>> = OnceLock::new();
    SCHEMA.get_or_init(|| Arc::new(build_schema())).clone()
}

/// The bundled packs followed by any extra rule files.
pub fn load_rules<'a>(extra: impl IntoIterator<Item = &'a str>) -> Result<RuleSet, RuleError> {
    let schema = schema();
    let mut files = Vec::new();
    for (_, src) in rule_packs() {
        files.push(parse_rules(src, &schema)?);
    }
    for src in extra {
        files.push(parse_rules(src, &schema)?);
    }
    RuleSet::new(files)
}

/// The bundled packs only.
pub fn default_rules() -> RuleSet {
    static RULES: OnceLock<RuleSet> = OnceLock::new();
    RULES
        .get_or_init(|| load_rules([]).expect("bundled rule packs are valid"))
        .clone()
}
