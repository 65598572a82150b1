//! Reachability oracle over the textual graph dump: a boolean transitive
//! closure that knows nothing about the rules.

use std::collections::{BTreeMap, BTreeSet};

use flexicia_core::cia;
use flexicia_core::graph::TypedGraph;
use flexicia_core::metamodel;

use super::{BBT_SIZE, BINARY_TREES};

pub struct Dumped {
    pub types: BTreeMap<u64, String>,
    pub attrs: BTreeMap<u64, String>,
    pub edges: Vec<(u64, String, u64)>,
}

pub fn parse_dump(text: &str) -> Dumped {
    let mut d = Dumped {
        types: BTreeMap::new(),
        attrs: BTreeMap::new(),
        edges: Vec::new(),
    };
    for line in text.lines() {
        let mut parts = line.splitn(3, ' ');
        let a: u64 = parts.next().unwrap().parse().unwrap();
        let mid = parts.next().unwrap();
        let rest = parts.next().unwrap_or("");
        if let Some(ty) = mid.strip_prefix('-').and_then(|m| m.strip_suffix("->")) {
            d.edges.push((a, ty.to_string(), rest.parse().unwrap()));
        } else {
            d.types.insert(a, mid.to_string());
            d.attrs.insert(a, rest.to_string());
        }
    }
    d
}

/// Nodes reachable from `from` along "depends on" links, by Warshall.
pub fn oracle_closure(d: &Dumped, from: &BTreeSet<u64>) -> BTreeSet<u64> {
    let ids: Vec<u64> = d.types.keys().copied().collect();
    let ix: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let n = ids.len();
    let mut r = vec![vec![false; n]; n];
    for (s, ty, t) in &d.edges {
        // r[a][b]: a change of a reaches b
        match ty.as_str() {
            "uses" | "occurs" | "imports" => r[ix[t]][ix[s]] = true,
            "justifies" => r[ix[s]][ix[t]] = true,
            _ => {}
        }
    }
    for k in 0..n {
        let via = r[k].clone();
        for row in r.iter_mut() {
            if row[k] {
                for (j, &reach) in via.iter().enumerate() {
                    if reach {
                        row[j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for f in from {
        for (j, &reach) in r[ix[f]].iter().enumerate() {
            if reach {
                out.insert(ids[j]);
            }
        }
    }
    out
}

/// Definitions whose body changed or which were deleted in the last run.
pub fn changed_definitions(d: &Dumped) -> BTreeSet<u64> {
    d.types
        .iter()
        .filter(|(_, t)| t.as_str() == metamodel::SEM_DEFINITION)
        .filter(|(id, _)| {
            let a = &d.attrs[id];
            a.contains("bodyChanged=\"true\"") || a.contains("status=\"deleted\"")
        })
        .map(|(id, _)| *id)
        .collect()
}

/// Every way of changing one definition of the corpus: rewording each
/// word of its first paragraph, and deleting it.
pub fn scenarios() -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (di, src) in [BINARY_TREES, BBT_SIZE].iter().enumerate() {
        let mut from = 0;
        while let Some(s) = src[from..].find("\\begin{definition}") {
            let start = from + s;
            let end = start + src[start..].find("\\end{definition}").unwrap();
            let close = end + "\\end{definition}".len();
            let body = &src[start..end];
            for word in ["tree", "all", "is", "iff"] {
                if let Some(w) = body.find(&format!(" {word} ")) {
                    let at = start + w + 1;
                    out.push((
                        di,
                        format!("{}{}X{}", &src[..at], word, &src[at + word.len()..]),
                    ));
                }
            }
            out.push((di, format!("{}{}", &src[..start], &src[close..])));
            from = close;
        }
    }
    out
}

/// Checks the impacts of the last run against the oracle: no dependent
/// of a changed definition is missed, a reworded definition is reported
/// itself, and anything beyond the oracle comes from a traced rule
/// application. Returns the number of such extra impacts.
pub fn check_scenario(g: &TypedGraph, run: &cia::Analysis) -> Result<usize, String> {
    let dumped = parse_dump(&g.dump());
    let changed = changed_definitions(&dumped);
    let expected = oracle_closure(&dumped, &changed);
    let impacted: BTreeSet<u64> = run.impacts.iter().map(|i| i.target).collect();
    let missing: Vec<_> = expected.difference(&impacted).collect();
    if !missing.is_empty() {
        return Err(format!("missing impacts on {missing:?}"));
    }
    for c in &changed {
        if dumped.attrs[c].contains("bodyChanged=\"true\"") && !impacted.contains(c) {
            return Err(format!("no impact on changed {c}"));
        }
    }
    let extras: Vec<_> = impacted.difference(&expected).collect();
    for extra in &extras {
        let traced = run
            .report
            .trace
            .iter()
            .any(|t| t.binding.iter().any(|(_, n)| n == *extra));
        if !traced {
            return Err(format!("untraced impact on {extra}"));
        }
    }
    Ok(extras.len())
}
