use std::collections::{BTreeMap, HashMap};

use super::syntax::{ActionStmt, AstExpr, AstRule, DeleteStmt, PatternStmt, Pos};
use super::{Action, Expr, NewNode, Rule, RuleError, ATTR_TYPE, IS_ATTRIBUTE};
use crate::graph::{Condition, Layer, Operand, Pattern, PatternEdge, PatternNode, Schema};

fn invalid(pos: Pos, message: impl Into<String>) -> RuleError {
    RuleError::Invalid {
        line: pos.line,
        message: message.into(),
    }
}

/// Attribute pseudo-node: variable bound to attribute `key` of `host`.
#[derive(Debug, Clone)]
struct Alias {
    host: usize,
    key: String,
}

struct Compiled {
    pattern: Pattern,
    aliases: HashMap<String, Alias>,
}

fn layer_of(schema: &Schema, ty: &str) -> Layer {
    schema.layer(ty).expect("type checked before use")
}

fn check_edge(
    schema: &Schema,
    ty: &str,
    src_ty: &str,
    dst_ty: &str,
    pos: Pos,
) -> Result<(), RuleError> {
    let sig = schema
        .signature(ty)
        .ok_or_else(|| RuleError::UnknownEdgeType {
            name: ty.to_string(),
            line: pos.line,
        })?;
    if layer_of(schema, src_ty) != sig.source || layer_of(schema, dst_ty) != sig.target {
        return Err(invalid(
            pos,
            format!(
                "{ty} must be {}→{}, not {src_ty}→{dst_ty}",
                sig.source.name(),
                sig.target.name()
            ),
        ));
    }
    Ok(())
}

fn resolve_expr(
    e: &AstExpr,
    vars: &[PatternNode],
    aliases: &HashMap<String, Alias>,
) -> Result<Operand, RuleError> {
    match e {
        AstExpr::Lit(s) => Ok(Operand::Lit(s.clone())),
        AstExpr::Attr { var, key, pos } => {
            if let Some(a) = aliases.get(var) {
                return match key.as_str() {
                    "value" => Ok(Operand::Attr {
                        var: a.host,
                        key: a.key.clone(),
                    }),
                    "key" => Ok(Operand::Lit(a.key.clone())),
                    other => Err(invalid(
                        *pos,
                        format!("attribute node `{var}` has no field `{other}`"),
                    )),
                };
            }
            let idx = vars.iter().position(|n| &n.var == var).ok_or_else(|| {
                RuleError::UnknownVariable {
                    var: var.clone(),
                    line: pos.line,
                }
            })?;
            Ok(Operand::Attr {
                var: idx,
                key: key.clone(),
            })
        }
    }
}

/// Compiles a pattern block on top of already bound `base` variables.
fn compile_pattern(
    schema: &Schema,
    stmts: &[PatternStmt],
    base: &[PatternNode],
    base_aliases: &HashMap<String, Alias>,
) -> Result<Compiled, RuleError> {
    let mut nodes = base.to_vec();
    let mut aliases = base_aliases.clone();
    let mut pending: BTreeMap<String, (Vec<(String, String)>, Pos)> = BTreeMap::new();
    let mut declared_here: Vec<String> = Vec::new();

    for s in stmts {
        let PatternStmt::Node {
            var,
            ty,
            attrs,
            pos,
        } = s
        else {
            continue;
        };
        if declared_here.contains(var) {
            return Err(invalid(*pos, format!("variable `{var}` declared twice")));
        }
        declared_here.push(var.clone());
        if ty == ATTR_TYPE {
            if aliases.contains_key(var) || nodes.iter().any(|n| &n.var == var) {
                return Err(invalid(*pos, format!("variable `{var}` already bound")));
            }
            pending.insert(var.clone(), (attrs.clone(), *pos));
            continue;
        }
        if !schema.has_node_type(ty) {
            return Err(RuleError::UnknownNodeType {
                name: ty.clone(),
                line: pos.line,
            });
        }
        if let Some(existing) = nodes.iter().find(|n| &n.var == var) {
            if &existing.ty != ty {
                return Err(invalid(
                    *pos,
                    format!("`{var}` already bound with type {}", existing.ty),
                ));
            }
        } else if aliases.contains_key(var) {
            return Err(invalid(*pos, format!("variable `{var}` already bound")));
        } else {
            nodes.push(PatternNode {
                var: var.clone(),
                ty: ty.clone(),
            });
        }
    }

    let mut pattern = Pattern {
        nodes,
        edges: Vec::new(),
        conditions: Vec::new(),
    };
    let index = |p: &Pattern, var: &str, pos: Pos| {
        p.var(var).ok_or_else(|| RuleError::UnknownVariable {
            var: var.to_string(),
            line: pos.line,
        })
    };

    for s in stmts {
        let PatternStmt::Edge {
            ty,
            source,
            target,
            pos,
        } = s
        else {
            continue;
        };
        if ty == IS_ATTRIBUTE {
            let (attrs, _) = pending.remove(source).ok_or_else(|| {
                invalid(
                    *pos,
                    format!("`{source}` is not an attribute node declared here"),
                )
            })?;
            let host = index(&pattern, target, *pos)?;
            let mut key = None;
            let mut value = None;
            for (k, v) in attrs {
                match k.as_str() {
                    "key" => key = Some(v),
                    "value" => value = Some(v),
                    other => {
                        return Err(invalid(
                            *pos,
                            format!("attribute nodes have no field `{other}`"),
                        ))
                    }
                }
            }
            let key =
                key.ok_or_else(|| invalid(*pos, format!("attribute node `{source}` needs a key")))?;
            pattern.conditions.push(Condition::Present {
                var: host,
                key: key.clone(),
            });
            if let Some(v) = value {
                pattern.conditions.push(Condition::Eq(
                    Operand::Attr {
                        var: host,
                        key: key.clone(),
                    },
                    Operand::Lit(v),
                ));
            }
            aliases.insert(source.clone(), Alias { host, key });
            continue;
        }
        let (si, ti) = (
            index(&pattern, source, *pos)?,
            index(&pattern, target, *pos)?,
        );
        check_edge(
            schema,
            ty,
            &pattern.nodes[si].ty,
            &pattern.nodes[ti].ty,
            *pos,
        )?;
        pattern.edges.push(PatternEdge {
            ty: ty.clone(),
            source: si,
            target: ti,
        });
    }
    if let Some((var, (_, pos))) = pending.into_iter().next() {
        return Err(invalid(
            pos,
            format!("attribute node `{var}` needs an isAttribute edge"),
        ));
    }

    for s in stmts {
        match s {
            PatternStmt::Node { var, ty, attrs, .. } if ty != ATTR_TYPE => {
                let idx = pattern.var(var).expect("declared above");
                for (k, v) in attrs {
                    pattern.conditions.push(Condition::Eq(
                        Operand::Attr {
                            var: idx,
                            key: k.clone(),
                        },
                        Operand::Lit(v.clone()),
                    ));
                }
            }
            PatternStmt::Cond {
                lhs, negated, rhs, ..
            } => {
                let a = resolve_expr(lhs, &pattern.nodes, &aliases)?;
                let b = resolve_expr(rhs, &pattern.nodes, &aliases)?;
                pattern.conditions.push(if *negated {
                    Condition::Ne(a, b)
                } else {
                    Condition::Eq(a, b)
                });
            }
            _ => {}
        }
    }
    Ok(Compiled { pattern, aliases })
}

pub(crate) fn compile_rule(schema: &Schema, ast: &AstRule) -> Result<Rule, RuleError> {
    let lhs = compile_pattern(schema, &ast.lhs, &[], &HashMap::new())?;
    let pacs = ast
        .pacs
        .iter()
        .map(|b| compile_pattern(schema, b, &lhs.pattern.nodes, &lhs.aliases).map(|c| c.pattern))
        .collect::<Result<Vec<_>, _>>()?;
    let nacs = ast
        .nacs
        .iter()
        .map(|b| compile_pattern(schema, b, &lhs.pattern.nodes, &lhs.aliases).map(|c| c.pattern))
        .collect::<Result<Vec<_>, _>>()?;

    // slots: lhs nodes followed by produced nodes
    let mut slots: Vec<PatternNode> = lhs.pattern.nodes.clone();
    let mut new_nodes = Vec::new();
    let mut new_edges = Vec::new();
    for s in &ast.produce {
        match s {
            PatternStmt::Node {
                var,
                ty,
                attrs,
                pos,
            } => {
                if ty == ATTR_TYPE {
                    return Err(invalid(
                        *pos,
                        "attribute nodes cannot be produced; assign in apply",
                    ));
                }
                if !schema.has_node_type(ty) {
                    return Err(RuleError::UnknownNodeType {
                        name: ty.clone(),
                        line: pos.line,
                    });
                }
                if let Some(kept) = slots.iter().find(|n| &n.var == var) {
                    if !schema.is_subtype(&kept.ty, ty) {
                        return Err(invalid(
                            *pos,
                            format!("`{var}` is bound with type {}, not {ty}", kept.ty),
                        ));
                    }
                    if !attrs.is_empty() {
                        return Err(invalid(
                            *pos,
                            format!(
                                "kept variable `{var}` cannot take attributes; assign in apply"
                            ),
                        ));
                    }
                    continue;
                }
                if lhs.aliases.contains_key(var) {
                    return Err(invalid(*pos, format!("variable `{var}` already bound")));
                }
                slots.push(PatternNode {
                    var: var.clone(),
                    ty: ty.clone(),
                });
                new_nodes.push(NewNode {
                    var: var.clone(),
                    ty: ty.clone(),
                    attrs: attrs.clone(),
                });
            }
            PatternStmt::Edge {
                ty,
                source,
                target,
                pos,
            } => {
                let find = |v: &str| {
                    slots.iter().position(|n| n.var == v).ok_or_else(|| {
                        RuleError::UnknownVariable {
                            var: v.to_string(),
                            line: pos.line,
                        }
                    })
                };
                let (si, ti) = (find(source)?, find(target)?);
                check_edge(schema, ty, &slots[si].ty, &slots[ti].ty, *pos)?;
                new_edges.push((ty.clone(), si, ti));
            }
            PatternStmt::Cond { pos, .. } => {
                return Err(invalid(*pos, "conditions are not allowed in produce"));
            }
        }
    }

    let lhs_len = lhs.pattern.nodes.len();
    let lhs_index = |v: &str, pos: Pos| {
        lhs.pattern
            .var(v)
            .ok_or_else(|| RuleError::UnknownVariable {
                var: v.to_string(),
                line: pos.line,
            })
    };
    let mut delete_nodes = Vec::new();
    let mut delete_edges = Vec::new();
    for d in &ast.delete {
        match d {
            DeleteStmt::Node { var, pos } => delete_nodes.push(lhs_index(var, *pos)?),
            DeleteStmt::Edge {
                ty,
                source,
                target,
                pos,
            } => {
                if !schema.has_edge_type(ty) {
                    return Err(RuleError::UnknownEdgeType {
                        name: ty.clone(),
                        line: pos.line,
                    });
                }
                delete_edges.push((
                    ty.clone(),
                    lhs_index(source, *pos)?,
                    lhs_index(target, *pos)?,
                ));
            }
        }
    }

    let mut actions = Vec::new();
    for a in &ast.apply {
        actions.push(match a {
            ActionStmt::Set {
                var,
                key,
                value,
                pos,
            } => {
                let (slot, key) = if let Some(al) = lhs.aliases.get(var) {
                    if key != "value" {
                        return Err(invalid(*pos, format!("only `{var}.value` can be assigned")));
                    }
                    (al.host, al.key.clone())
                } else {
                    let slot = slots.iter().position(|n| &n.var == var).ok_or_else(|| {
                        RuleError::UnknownVariable {
                            var: var.clone(),
                            line: pos.line,
                        }
                    })?;
                    (slot, key.clone())
                };
                Action::Set {
                    slot,
                    key,
                    value: to_expr(resolve_expr(value, &slots, &lhs.aliases)?),
                }
            }
            ActionStmt::Call { rule, args, pos } => {
                let args = args
                    .iter()
                    .map(|v| {
                        slots.iter().position(|n| &n.var == v).ok_or_else(|| {
                            RuleError::UnknownVariable {
                                var: v.clone(),
                                line: pos.line,
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Action::Call {
                    rule: rule.clone(),
                    args,
                    line: pos.line,
                }
            }
            ActionStmt::Emit { value } => {
                Action::Emit(to_expr(resolve_expr(value, &slots, &lhs.aliases)?))
            }
        });
    }

    debug_assert!(slots.len() >= lhs_len);
    Ok(Rule {
        name: ast.name.clone(),
        line: ast.pos.map_or(0, |p| p.line),
        lhs: lhs.pattern,
        pacs,
        nacs,
        new_nodes,
        new_edges,
        delete_nodes,
        delete_edges,
        actions,
        slots: slots.into_iter().map(|n| n.var).collect(),
    })
}

fn to_expr(o: Operand) -> Expr {
    match o {
        Operand::Lit(s) => Expr::Lit(s),
        Operand::Attr { var, key } => Expr::Attr { slot: var, key },
    }
}
