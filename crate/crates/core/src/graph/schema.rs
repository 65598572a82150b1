use std::collections::{BTreeMap, BTreeSet};

use super::GraphError;

pub const SYNTAX_ROOT: &str = "SyntaxNode";
pub const SEMANTIC_ROOT: &str = "SemanticNode";
pub const IMPACT_ROOT: &str = "ImpactNode";

/// The three disjoint layers of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Syntax,
    Semantic,
    Impact,
}

impl Layer {
    pub fn name(self) -> &'static str {
        match self {
            Layer::Syntax => "syntax",
            Layer::Semantic => "semantic",
            Layer::Impact => "impact",
        }
    }

    fn root(self) -> &'static str {
        match self {
            Layer::Syntax => SYNTAX_ROOT,
            Layer::Semantic => SEMANTIC_ROOT,
            Layer::Impact => IMPACT_ROOT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSignature {
    pub source: Layer,
    pub target: Layer,
}

#[derive(Debug, Clone)]
struct TypeInfo {
    supertype: Option<String>,
    layer: Layer,
    /// The type itself and every transitive subtype.
    closure: BTreeSet<String>,
}

#[derive(Debug, Clone)]
struct EdgeInfo {
    supertype: Option<String>,
    signature: EdgeSignature,
    closure: BTreeSet<String>,
}

/// Node and edge type declarations with single inheritance.
#[derive(Debug, Clone)]
pub struct Schema {
    nodes: BTreeMap<String, TypeInfo>,
    edges: BTreeMap<String, EdgeInfo>,
}

impl Default for Schema {
    fn default() -> Self {
        Self::new()
    }
}

impl Schema {
    /// A schema holding only the three root node types.
    pub fn new() -> Self {
        let mut nodes = BTreeMap::new();
        for layer in [Layer::Syntax, Layer::Semantic, Layer::Impact] {
            nodes.insert(
                layer.root().to_string(),
                TypeInfo {
                    supertype: None,
                    layer,
                    closure: BTreeSet::from([layer.root().to_string()]),
                },
            );
        }
        Schema {
            nodes,
            edges: BTreeMap::new(),
        }
    }

    /// Declares a node type. Every node type descends from one of the roots,
    /// so the supertype is mandatory.
    pub fn add_node_type(&mut self, name: &str, supertype: &str) -> Result<(), GraphError> {
        if self.nodes.contains_key(name) {
            return Err(GraphError::DuplicateType(name.to_string()));
        }
        let layer = self
            .nodes
            .get(supertype)
            .ok_or_else(|| GraphError::UnknownNodeType(supertype.to_string()))?
            .layer;
        self.nodes.insert(
            name.to_string(),
            TypeInfo {
                supertype: Some(supertype.to_string()),
                layer,
                closure: BTreeSet::from([name.to_string()]),
            },
        );
        let mut cur = Some(supertype.to_string());
        while let Some(t) = cur {
            let info = self.nodes.get_mut(&t).expect("ancestor registered");
            info.closure.insert(name.to_string());
            cur = info.supertype.clone();
        }
        Ok(())
    }

    pub fn add_edge_type(
        &mut self,
        name: &str,
        supertype: Option<&str>,
        signature: EdgeSignature,
    ) -> Result<(), GraphError> {
        if self.edges.contains_key(name) {
            return Err(GraphError::DuplicateType(name.to_string()));
        }
        if let Some(sup) = supertype {
            let info = self
                .edges
                .get(sup)
                .ok_or_else(|| GraphError::UnknownEdgeType(sup.to_string()))?;
            if info.signature != signature {
                return Err(GraphError::SignatureMismatch(name.to_string()));
            }
        }
        self.edges.insert(
            name.to_string(),
            EdgeInfo {
                supertype: supertype.map(str::to_string),
                signature,
                closure: BTreeSet::from([name.to_string()]),
            },
        );
        let mut cur = supertype.map(str::to_string);
        while let Some(t) = cur {
            let info = self.edges.get_mut(&t).expect("ancestor registered");
            info.closure.insert(name.to_string());
            cur = info.supertype.clone();
        }
        Ok(())
    }

    pub fn has_node_type(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn has_edge_type(&self, name: &str) -> bool {
        self.edges.contains_key(name)
    }

    pub fn node_types(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn edge_types(&self) -> impl Iterator<Item = &str> {
        self.edges.keys().map(String::as_str)
    }

    pub fn supertype(&self, name: &str) -> Option<&str> {
        self.nodes.get(name)?.supertype.as_deref()
    }

    pub fn layer(&self, node_type: &str) -> Option<Layer> {
        self.nodes.get(node_type).map(|i| i.layer)
    }

    pub fn signature(&self, edge_type: &str) -> Option<EdgeSignature> {
        self.edges.get(edge_type).map(|i| i.signature)
    }

    /// `ty` itself and all of its subtypes.
    pub fn subtypes(&self, ty: &str) -> Option<&BTreeSet<String>> {
        self.nodes.get(ty).map(|i| &i.closure)
    }

    pub fn is_subtype(&self, ty: &str, of: &str) -> bool {
        self.nodes.get(of).is_some_and(|i| i.closure.contains(ty))
    }

    pub fn is_edge_subtype(&self, ty: &str, of: &str) -> bool {
        self.edges.get(of).is_some_and(|i| i.closure.contains(ty))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_partition_types() {
        let mut s = Schema::new();
        s.add_node_type("TheoryObject", SEMANTIC_ROOT).unwrap();
        s.add_node_type("SemDefinition", "TheoryObject").unwrap();
        s.add_node_type("Omtext", SYNTAX_ROOT).unwrap();
        assert_eq!(s.layer("SemDefinition"), Some(Layer::Semantic));
        assert_eq!(s.layer("Omtext"), Some(Layer::Syntax));
        assert!(s.is_subtype("SemDefinition", SEMANTIC_ROOT));
        assert!(s.is_subtype("SemDefinition", "SemDefinition"));
        assert!(!s.is_subtype("SemDefinition", SYNTAX_ROOT));
        assert!(!s.is_subtype("TheoryObject", "SemDefinition"));
        assert_eq!(
            s.add_node_type("X", "Nope"),
            Err(GraphError::UnknownNodeType("Nope".into()))
        );
        assert_eq!(
            s.add_node_type("Omtext", SYNTAX_ROOT),
            Err(GraphError::DuplicateType("Omtext".into()))
        );
    }
}
