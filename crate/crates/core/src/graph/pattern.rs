use std::collections::BTreeSet;
use std::ops::ControlFlow;

use super::{NodeId, TypedGraph};

/// Right-hand side of an attribute test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Lit(String),
    /// Attribute `key` of the node bound to pattern variable `var`.
    /// Missing attributes read as the empty string.
    Attr {
        var: usize,
        key: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Eq(Operand, Operand),
    Ne(Operand, Operand),
    Present { var: usize, key: String },
}

impl Condition {
    fn vars(&self) -> Vec<usize> {
        let of = |o: &Operand| match o {
            Operand::Attr { var, .. } => Some(*var),
            Operand::Lit(_) => None,
        };
        match self {
            Condition::Eq(a, b) | Condition::Ne(a, b) => of(a).into_iter().chain(of(b)).collect(),
            Condition::Present { var, .. } => vec![*var],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternNode {
    pub var: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternEdge {
    pub ty: String,
    pub source: usize,
    pub target: usize,
}

/// Typed node variables, edges between them and attribute conditions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pattern {
    pub nodes: Vec<PatternNode>,
    pub edges: Vec<PatternEdge>,
    pub conditions: Vec<Condition>,
}

impl Pattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.var == name)
    }

    fn index(&self, name: &str) -> usize {
        self.var(name)
            .unwrap_or_else(|| panic!("pattern variable `{name}` not declared"))
    }

    pub fn node(mut self, var: &str, ty: &str) -> Self {
        self.nodes.push(PatternNode {
            var: var.to_string(),
            ty: ty.to_string(),
        });
        self
    }

    pub fn edge(mut self, ty: &str, source: &str, target: &str) -> Self {
        let (source, target) = (self.index(source), self.index(target));
        self.edges.push(PatternEdge {
            ty: ty.to_string(),
            source,
            target,
        });
        self
    }

    pub fn attr_eq(mut self, var: &str, key: &str, value: &str) -> Self {
        let var = self.index(var);
        self.conditions.push(Condition::Eq(
            Operand::Attr {
                var,
                key: key.to_string(),
            },
            Operand::Lit(value.to_string()),
        ));
        self
    }

    pub fn condition(mut self, c: Condition) -> Self {
        self.conditions.push(c);
        self
    }
}

pub type Binding = Vec<NodeId>;

/// Constraints grouped by the search depth at which they become decidable.
struct Plan<'p> {
    pre_edges: Vec<&'p PatternEdge>,
    pre_conds: Vec<&'p Condition>,
    edges_at: Vec<Vec<&'p PatternEdge>>,
    conds_at: Vec<Vec<&'p Condition>>,
}

impl<'p> Plan<'p> {
    fn new(p: &'p Pattern, seed: &[Option<NodeId>]) -> Self {
        let n = p.nodes.len();
        let level = |v: usize| if seed[v].is_some() { None } else { Some(v) };
        let mut plan = Plan {
            pre_edges: Vec::new(),
            pre_conds: Vec::new(),
            edges_at: vec![Vec::new(); n],
            conds_at: vec![Vec::new(); n],
        };
        for e in &p.edges {
            match level(e.source).max(level(e.target)) {
                None => plan.pre_edges.push(e),
                Some(l) => plan.edges_at[l].push(e),
            }
        }
        for c in &p.conditions {
            match c.vars().into_iter().map(level).max().flatten() {
                None => plan.pre_conds.push(c),
                Some(l) => plan.conds_at[l].push(c),
            }
        }
        plan
    }
}

impl TypedGraph {
    fn operand<'a>(&'a self, o: &'a Operand, b: &[NodeId]) -> &'a str {
        match o {
            Operand::Lit(s) => s,
            Operand::Attr { var, key } => self.attr(b[*var], key).unwrap_or(""),
        }
    }

    fn holds(&self, c: &Condition, b: &[NodeId]) -> bool {
        match c {
            Condition::Eq(x, y) => self.operand(x, b) == self.operand(y, b),
            Condition::Ne(x, y) => self.operand(x, b) != self.operand(y, b),
            Condition::Present { var, key } => self.attr(b[*var], key).is_some(),
        }
    }

    /// All bindings of `p`, in lexicographic order of node ids.
    pub fn query(&self, p: &Pattern) -> Vec<Binding> {
        let mut out = Vec::new();
        self.search(p, &vec![None; p.nodes.len()], None, &mut |b| {
            out.push(b.to_vec());
            ControlFlow::Continue(())
        });
        out
    }

    pub fn first_match(
        &self,
        p: &Pattern,
        seed: &[Option<NodeId>],
        scope: Option<&BTreeSet<NodeId>>,
    ) -> Option<Binding> {
        let mut found = None;
        self.search(p, seed, scope, &mut |b| {
            found = Some(b.to_vec());
            ControlFlow::Break(())
        });
        found
    }

    pub fn has_match(&self, p: &Pattern, seed: &[Option<NodeId>]) -> bool {
        self.first_match(p, seed, None).is_some()
    }

    /// Whether a complete binding still satisfies every constraint of `p`.
    pub fn binding_holds(&self, p: &Pattern, b: &[NodeId]) -> bool {
        let seed: Vec<_> = b.iter().copied().map(Some).collect();
        b.len() == p.nodes.len() && self.has_match(p, &seed)
    }

    /// Injective backtracking search. Variables are bound in declaration
    /// order with candidates ascending, so bindings are visited in
    /// lexicographic order. Seeded variables are fixed; when `scope` is
    /// given every bound node must belong to it.
    pub fn search(
        &self,
        p: &Pattern,
        seed: &[Option<NodeId>],
        scope: Option<&BTreeSet<NodeId>>,
        visit: &mut dyn FnMut(&[NodeId]) -> ControlFlow<()>,
    ) {
        assert_eq!(seed.len(), p.nodes.len(), "seed length must match pattern");
        let mut binding: Vec<NodeId> = Vec::with_capacity(p.nodes.len());
        for (i, s) in seed.iter().enumerate() {
            if let Some(id) = s {
                let ok = self
                    .node(*id)
                    .is_some_and(|n| self.schema().is_subtype(&n.ty, &p.nodes[i].ty))
                    && scope.is_none_or(|sc| sc.contains(id))
                    && !seed[..i].contains(s);
                if !ok {
                    return;
                }
            }
            binding.push(s.unwrap_or(NodeId::MAX));
        }
        let plan = Plan::new(p, seed);
        if !plan.pre_edges.iter().all(|e| self.edge_holds(e, &binding))
            || !plan.pre_conds.iter().all(|c| self.holds(c, &binding))
        {
            return;
        }
        let _ = self.extend(p, seed, scope, &plan, 0, &mut binding, visit);
    }

    fn edge_holds(&self, e: &PatternEdge, b: &[NodeId]) -> bool {
        self.has_edge(&e.ty, b[e.source], b[e.target])
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        p: &Pattern,
        seed: &[Option<NodeId>],
        scope: Option<&BTreeSet<NodeId>>,
        plan: &Plan<'_>,
        depth: usize,
        binding: &mut Vec<NodeId>,
        visit: &mut dyn FnMut(&[NodeId]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if depth == p.nodes.len() {
            return visit(binding);
        }
        if seed[depth].is_some() {
            return self.extend(p, seed, scope, plan, depth + 1, binding, visit);
        }
        let bound = |v: usize| v < depth || seed[v].is_some();
        let is_free_used = |id: NodeId, binding: &[NodeId]| {
            (0..p.nodes.len()).any(|v| v != depth && bound(v) && binding[v] == id)
        };
        for cand in self.candidates(p, depth, &bound, binding) {
            if scope.is_some_and(|sc| !sc.contains(&cand)) || is_free_used(cand, binding) {
                continue;
            }
            binding[depth] = cand;
            let ok = plan.edges_at[depth]
                .iter()
                .all(|e| self.edge_holds(e, binding))
                && plan.conds_at[depth].iter().all(|c| self.holds(c, binding));
            if ok {
                self.extend(p, seed, scope, plan, depth + 1, binding, visit)?;
            }
        }
        binding[depth] = NodeId::MAX;
        ControlFlow::Continue(())
    }

    /// Candidate nodes for variable `v`, ascending. When an edge links `v` to
    /// an already bound variable only that node's neighbours are considered.
    fn candidates(
        &self,
        p: &Pattern,
        v: usize,
        bound: &dyn Fn(usize) -> bool,
        binding: &[NodeId],
    ) -> Vec<NodeId> {
        let ty = &p.nodes[v].ty;
        let anchor = p.edges.iter().find_map(|e| {
            if e.target == v && e.source != v && bound(e.source) {
                Some((e, binding[e.source], true))
            } else if e.source == v && e.target != v && bound(e.target) {
                Some((e, binding[e.target], false))
            } else {
                None
            }
        });
        match anchor {
            Some((e, other, outgoing)) => {
                let set: BTreeSet<NodeId> = if outgoing {
                    self.out_edges(other)
                        .filter(|x| self.schema().is_edge_subtype(&x.ty, &e.ty))
                        .map(|x| x.target)
                        .collect()
                } else {
                    self.in_edges(other)
                        .filter(|x| self.schema().is_edge_subtype(&x.ty, &e.ty))
                        .map(|x| x.source)
                        .collect()
                };
                set.into_iter()
                    .filter(|id| {
                        self.node(*id)
                            .is_some_and(|n| self.schema().is_subtype(&n.ty, ty))
                    })
                    .collect()
            }
            None => self.nodes_of_type(ty),
        }
    }
}
