//! Graph rewriting: a small rule language with application conditions,
//! apply blocks and a phase-based strategy.

mod compile;
mod syntax;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Binding, GraphError, NodeId, Pattern, Schema, TypedGraph};

/// Pseudo node type standing for one attribute of a real node.
pub const ATTR_TYPE: &str = "Attr";
/// Pseudo edge type linking an [`ATTR_TYPE`] variable to its host.
pub const IS_ATTRIBUTE: &str = "isAttribute";

const MAX_CALL_DEPTH: usize = 32;
const CALL_RADIUS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule `{name}` defined twice (line {line})")]
    DuplicateRule { name: String, line: usize },
    #[error("unknown node type `{name}` (line {line})")]
    UnknownNodeType { name: String, line: usize },
    #[error("unknown edge type `{name}` (line {line})")]
    UnknownEdgeType { name: String, line: usize },
    #[error("unknown rule `{name}` (line {line})")]
    UnknownRule { name: String, line: usize },
    #[error("unknown variable `{var}` (line {line})")]
    UnknownVariable { var: String, line: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("binding for rule `{0}` no longer matches the graph")]
    StaleBinding(String),
    #[error("phase `{phase}` exceeded its budget of {budget} rewrites")]
    TerminationBudgetExceeded { phase: String, budget: u64 },
    #[error("call nesting deeper than {MAX_CALL_DEPTH} in rule `{0}`")]
    CallDepthExceeded(String),
    #[error("rule `{0}` is not loaded")]
    UnknownRule(String),
    #[error("rule `{rule}` uses `{var}` after it was deleted")]
    Deleted { rule: String, var: String },
    #[error("rule `{rule}` left an invalid graph: {source}")]
    Graph { rule: String, source: GraphError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(String),
    Attr { slot: usize, key: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Set {
        slot: usize,
        key: String,
        value: Expr,
    },
    Call {
        rule: String,
        args: Vec<usize>,
        line: usize,
    },
    Emit(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewNode {
    pub var: String,
    pub ty: String,
    pub attrs: Vec<(String, String)>,
}

/// A compiled rule. Variables are addressed by slot: the left-hand side
/// nodes first, then the nodes created by `produce`. Application
/// conditions extend the left-hand side pattern, so their first slots are
/// shared with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub line: usize,
    pub lhs: Pattern,
    pub pacs: Vec<Pattern>,
    pub nacs: Vec<Pattern>,
    pub new_nodes: Vec<NewNode>,
    pub new_edges: Vec<(String, usize, usize)>,
    pub delete_nodes: Vec<usize>,
    pub delete_edges: Vec<(String, usize, usize)>,
    pub actions: Vec<Action>,
    pub slots: Vec<String>,
}

impl Rule {
    fn conditions_hold(&self, g: &TypedGraph, b: &[NodeId]) -> bool {
        let seed = |p: &Pattern| {
            let mut s: Vec<Option<NodeId>> = b.iter().copied().map(Some).collect();
            s.resize(p.nodes.len(), None);
            s
        };
        self.pacs.iter().all(|p| g.has_match(p, &seed(p)))
            && !self.nacs.iter().any(|p| g.has_match(p, &seed(p)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub name: String,
    pub rules: Vec<String>,
    pub max: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Strategy {
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Default)]
pub struct RuleFile {
    pub rules: Vec<Rule>,
    pub strategy: Strategy,
}

/// Parses and type-checks one rule file. Call targets must be defined in
/// the same file.
pub fn parse_rules(src: &str, schema: &Schema) -> Result<RuleFile, RuleError> {
    let ast = syntax::Parser::new(src)?.file()?;
    let mut rules: Vec<Rule> = Vec::new();
    for r in &ast.rules {
        if rules.iter().any(|x| x.name == r.name) {
            return Err(RuleError::DuplicateRule {
                name: r.name.clone(),
                line: r.pos.map_or(0, |p| p.line),
            });
        }
        rules.push(compile::compile_rule(schema, r)?);
    }
    for r in &rules {
        for a in &r.actions {
            if let Action::Call { rule, args, line } = a {
                let target = rules.iter().find(|x| &x.name == rule).ok_or_else(|| {
                    RuleError::UnknownRule {
                        name: rule.clone(),
                        line: *line,
                    }
                })?;
                if args.len() > target.lhs.nodes.len() {
                    return Err(RuleError::Invalid {
                        line: *line,
                        message: format!(
                            "`{rule}` binds {} variables but is called with {}",
                            target.lhs.nodes.len(),
                            args.len()
                        ),
                    });
                }
            }
        }
    }
    let phases = ast
        .phases
        .into_iter()
        .map(|p| Phase {
            name: p.name,
            rules: p.rules.into_iter().map(|(r, _)| r).collect(),
            max: p.max,
        })
        .collect();
    Ok(RuleFile {
        rules,
        strategy: Strategy { phases },
    })
}

/// Rules from several files plus the concatenation of their strategies.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
    index: HashMap<String, usize>,
    strategy: Strategy,
}

impl RuleSet {
    pub fn new(files: impl IntoIterator<Item = RuleFile>) -> Result<Self, RuleError> {
        let mut set = RuleSet::default();
        for f in files {
            for r in f.rules {
                if set.index.contains_key(&r.name) {
                    return Err(RuleError::DuplicateRule {
                        name: r.name,
                        line: r.line,
                    });
                }
                set.index.insert(r.name.clone(), set.rules.len());
                set.rules.push(r);
            }
            set.strategy.phases.extend(f.strategy.phases);
        }
        for p in &set.strategy.phases {
            if let Some(missing) = p.rules.iter().find(|r| !set.index.contains_key(*r)) {
                return Err(RuleError::UnknownRule {
                    name: missing.clone(),
                    line: 0,
                });
            }
        }
        Ok(set)
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.index.get(name).map(|i| &self.rules[*i])
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    /// Replaces every phase budget.
    pub fn set_budget(&mut self, max: u64) {
        for p in &mut self.strategy.phases {
            p.max = max;
        }
    }
}

/// All left-hand side bindings of `rule` that satisfy its application
/// conditions, in graph order.
pub fn matches(rule: &Rule, g: &TypedGraph) -> Vec<Binding> {
    let mut out = Vec::new();
    g.search(
        &rule.lhs,
        &vec![None; rule.lhs.nodes.len()],
        None,
        &mut |b| {
            if rule.conditions_hold(g, b) {
                out.push(b.to_vec());
            }
            ControlFlow::Continue(())
        },
    );
    out
}

fn first_valid(
    rule: &Rule,
    g: &TypedGraph,
    seed: &[Option<NodeId>],
    scope: Option<&BTreeSet<NodeId>>,
) -> Option<Binding> {
    let mut found = None;
    g.search(&rule.lhs, seed, scope, &mut |b| {
        if rule.conditions_hold(g, b) {
            found = Some(b.to_vec());
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    found
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub name: String,
    pub rewrites: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub phase: String,
    pub rule: String,
    /// Nesting level; 0 for rules applied by the strategy itself.
    pub depth: usize,
    pub binding: Vec<(String, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmitEntry {
    pub rule: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub phases: Vec<PhaseReport>,
    pub emits: Vec<EmitEntry>,
    pub trace: Vec<TraceEntry>,
}

impl RunReport {
    pub fn rewrites(&self) -> u64 {
        self.phases.iter().map(|p| p.rewrites).sum::<u64>()
    }
}

struct Run<'a> {
    set: &'a RuleSet,
    report: RunReport,
    phase: String,
    count: u64,
    budget: u64,
}

impl<'a> Run<'a> {
    fn new(set: &'a RuleSet, phase: &str, budget: u64) -> Self {
        Run {
            set,
            report: RunReport::default(),
            phase: phase.to_string(),
            count: 0,
            budget,
        }
    }

    fn fire(
        &mut self,
        g: &mut TypedGraph,
        rule: &Rule,
        binding: &[NodeId],
        depth: usize,
    ) -> Result<(), RewriteError> {
        if !g.binding_holds(&rule.lhs, binding) || !rule.conditions_hold(g, binding) {
            return Err(RewriteError::StaleBinding(rule.name.clone()));
        }
        if self.count >= self.budget {
            return Err(RewriteError::TerminationBudgetExceeded {
                phase: self.phase.clone(),
                budget: self.budget,
            });
        }
        self.count += 1;
        self.report.trace.push(TraceEntry {
            phase: self.phase.clone(),
            rule: rule.name.clone(),
            depth,
            binding: rule
                .slots
                .iter()
                .cloned()
                .zip(binding.iter().copied())
                .collect(),
        });
        let graph_err = |source| RewriteError::Graph {
            rule: rule.name.clone(),
            source,
        };

        let mut env: Vec<Option<NodeId>> = binding.iter().copied().map(Some).collect();
        let mut touched: BTreeSet<NodeId> = BTreeSet::new();
        for n in &rule.new_nodes {
            let id = g
                .add_node_unchecked(&n.ty, n.attrs.iter().cloned())
                .map_err(graph_err)?;
            env.push(Some(id));
            touched.insert(id);
        }
        for (ty, s, t) in &rule.new_edges {
            let (s, t) = (env[*s].expect("bound"), env[*t].expect("bound"));
            g.add_edge(ty, s, t).map_err(graph_err)?;
        }
        for (ty, s, t) in &rule.delete_edges {
            while let Some(e) = g.find_edge(ty, binding[*s], binding[*t]) {
                g.remove_edge(e);
            }
        }
        for &slot in &rule.delete_nodes {
            if let Some(id) = env[slot].take() {
                g.remove_node(id).map_err(graph_err)?;
            }
        }

        let node_at = |env: &[Option<NodeId>], slot: usize| {
            env[slot].ok_or_else(|| RewriteError::Deleted {
                rule: rule.name.clone(),
                var: rule.slots[slot].clone(),
            })
        };
        let eval =
            |g: &TypedGraph, env: &[Option<NodeId>], e: &Expr| -> Result<String, RewriteError> {
                Ok(match e {
                    Expr::Lit(s) => s.clone(),
                    Expr::Attr { slot, key } => {
                        g.attr(node_at(env, *slot)?, key).unwrap_or("").to_string()
                    }
                })
            };
        for a in &rule.actions {
            match a {
                Action::Set { slot, key, value } => {
                    let v = eval(g, &env, value)?;
                    let id = node_at(&env, *slot)?;
                    g.set_attr(id, key, v).map_err(graph_err)?;
                    touched.insert(id);
                }
                Action::Emit(e) => {
                    let text = eval(g, &env, e)?;
                    self.report.emits.push(EmitEntry {
                        rule: rule.name.clone(),
                        text,
                    });
                }
                Action::Call {
                    rule: target, args, ..
                } => {
                    let args = args
                        .iter()
                        .map(|s| node_at(&env, *s))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.call(g, target, &args, depth + 1)?;
                }
            }
        }
        for id in touched {
            if g.contains(id) {
                g.check_node(id).map_err(graph_err)?;
            }
        }
        Ok(())
    }

    /// Runs `name` to a fixpoint with its first variables bound to `args`,
    /// matching only within a small neighbourhood of the arguments.
    fn call(
        &mut self,
        g: &mut TypedGraph,
        name: &str,
        args: &[NodeId],
        depth: usize,
    ) -> Result<(), RewriteError> {
        if depth > MAX_CALL_DEPTH {
            return Err(RewriteError::CallDepthExceeded(name.to_string()));
        }
        let set = self.set;
        let rule = set
            .rule(name)
            .ok_or_else(|| RewriteError::UnknownRule(name.to_string()))?;
        let mut seed: Vec<Option<NodeId>> = args.iter().copied().map(Some).collect();
        seed.resize(rule.lhs.nodes.len(), None);
        loop {
            if args.iter().any(|a| !g.contains(*a)) {
                return Ok(());
            }
            let scope = neighbourhood(g, args, CALL_RADIUS);
            let Some(b) = first_valid(rule, g, &seed, Some(&scope)) else {
                return Ok(());
            };
            self.fire(g, rule, &b, depth)?;
        }
    }
}

/// Nodes within `radius` edges of `from`, ignoring edge direction.
pub fn neighbourhood(g: &TypedGraph, from: &[NodeId], radius: usize) -> BTreeSet<NodeId> {
    let mut seen: BTreeSet<NodeId> = from.iter().copied().collect();
    let mut frontier: HashSet<NodeId> = seen.iter().copied().collect();
    for _ in 0..radius {
        let mut next = HashSet::new();
        for &n in &frontier {
            let adjacent = g
                .out_edges(n)
                .map(|e| e.target)
                .chain(g.in_edges(n).map(|e| e.source));
            for m in adjacent {
                if seen.insert(m) {
                    next.insert(m);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Applies `rule` at `binding`, which must come from [`matches`] on the
/// current graph. Calls are resolved in `set`.
pub fn apply(
    set: &RuleSet,
    rule: &Rule,
    binding: &[NodeId],
    g: &mut TypedGraph,
) -> Result<RunReport, RewriteError> {
    let mut run = Run::new(set, "", u64::MAX);
    let start = Instant::now();
    run.fire(g, rule, binding, 0)?;
    run.report.phases.push(PhaseReport {
        name: String::new(),
        rewrites: run.count,
        elapsed: start.elapsed(),
    });
    Ok(run.report)
}

/// Executes the phases of `set` in order. Each phase repeatedly applies the
/// first rule (in phase order) that has a match, at its first binding,
/// until none matches.
pub fn run_strategy(set: &RuleSet, g: &mut TypedGraph) -> Result<RunReport, RewriteError> {
    let mut report = RunReport::default();
    for phase in &set.strategy.phases {
        let rules = phase
            .rules
            .iter()
            .map(|r| {
                set.rule(r)
                    .ok_or_else(|| RewriteError::UnknownRule(r.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut run = Run::new(set, &phase.name, phase.max);
        let start = Instant::now();
        'fixpoint: loop {
            for rule in &rules {
                let seed = vec![None; rule.lhs.nodes.len()];
                if let Some(b) = first_valid(rule, g, &seed, None) {
                    run.fire(g, rule, &b, 0)?;
                    continue 'fixpoint;
                }
            }
            break;
        }
        report.phases.push(PhaseReport {
            name: phase.name.clone(),
            rewrites: run.count,
            elapsed: start.elapsed(),
        });
        report.emits.append(&mut run.report.emits);
        report.trace.append(&mut run.report.trace);
    }
    Ok(report)
}
