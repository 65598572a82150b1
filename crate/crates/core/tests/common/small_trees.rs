//! On small trees the edit script produced by `diff` must be as short as
//! the shortest operation sequence found by breadth-first search over all
//! trees reachable with single insert-subtree, delete-subtree, relabel and
//! move operations.
//!
//! Trees consist of a theory root and paragraph nodes carrying a `label`
//! attribute from {a, b}. A tree is encoded as the pre-order list of
//! (depth, label) of its non-root nodes. The search space holds every tree
//! with at most `SPACE` non-root nodes, one more than the largest compared
//! tree, so shortest paths may pass through a larger intermediate tree.

use std::collections::{HashMap, VecDeque};

use flexicia_core::diff::{apply_script, diff, SimilarityModel};
use flexicia_core::doc::{ContentElement, Document, ElementKind};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

pub type Tree = Vec<(u8, u8)>;

pub const COMPARED: usize = 5;
pub const SPACE: usize = 6;

fn key(t: &Tree) -> u64 {
    t.iter().fold(t.len() as u64, |k, &(d, l)| {
        (k << 4) | ((d as u64) << 1) | l as u64
    })
}

fn end(t: &Tree, i: usize) -> usize {
    let d = t[i].0;
    (i + 1..t.len()).find(|&j| t[j].0 <= d).unwrap_or(t.len())
}

/// Insertion slots as (index, depth of inserted root): for every parent
/// (None is the root) and every child position.
fn slots(t: &Tree) -> Vec<(usize, u8)> {
    let mut out = Vec::new();
    let mut parents: Vec<(usize, usize, u8)> = vec![(0, t.len(), 0)];
    for i in 0..t.len() {
        parents.push((i + 1, end(t, i), t[i].0));
    }
    for (start, stop, d) in parents {
        let kids: Vec<usize> = (start..stop).filter(|&j| t[j].0 == d + 1).collect();
        for &k in &kids {
            out.push((k, d + 1));
        }
        out.push((stop, d + 1));
    }
    out
}

pub fn shapes(max: usize) -> Vec<Tree> {
    let mut all = Vec::new();
    let mut frontier: Vec<Tree> = vec![vec![(1, 0)], vec![(1, 1)]];
    while let Some(t) = frontier.pop() {
        if t.len() < max {
            let last = t.last().unwrap().0;
            for d in 2..=last + 1 {
                for l in 0..2 {
                    let mut n = t.clone();
                    n.push((d, l));
                    frontier.push(n);
                }
            }
        }
        all.push(t);
    }
    all
}

/// Every tree with at most `max` non-root nodes.
pub fn forests(max: usize) -> Vec<Tree> {
    let mut all = vec![vec![]];
    let mut i = 0;
    while i < all.len() {
        let t: Tree = all[i].clone();
        i += 1;
        if t.len() == max {
            continue;
        }
        let last = t.last().map_or(0, |x| x.0);
        for d in 1..=last + 1 {
            for l in 0..2 {
                let mut n = t.clone();
                n.push((d, l));
                all.push(n);
            }
        }
    }
    all
}

fn neighbours(t: &Tree, shapes: &[Tree], out: &mut Vec<Tree>) {
    out.clear();
    for i in 0..t.len() {
        let e = end(t, i);
        // delete
        let mut d = t.clone();
        d.drain(i..e);
        out.push(d.clone());
        // relabel
        let mut r = t.clone();
        r[i].1 ^= 1;
        out.push(r);
        // move
        let base = t[i].0;
        let sub: Vec<(u8, u8)> = t[i..e].to_vec();
        for (at, depth) in slots(&d) {
            let mut m = d.clone();
            let moved = sub.iter().map(|&(x, l)| (x - base + depth, l));
            m.splice(at..at, moved);
            if m != *t {
                out.push(m);
            }
        }
    }
    for s in shapes {
        if t.len() + s.len() > SPACE {
            continue;
        }
        for (at, depth) in slots(t) {
            let mut m = t.clone();
            m.splice(at..at, s.iter().map(|&(x, l)| (x - 1 + depth, l)));
            out.push(m);
        }
    }
}

pub fn distances(from: &Tree, shapes: &[Tree]) -> HashMap<u64, u8> {
    let mut dist = HashMap::from([(key(from), 0u8)]);
    let mut queue = VecDeque::from([from.clone()]);
    let mut buf = Vec::new();
    while let Some(t) = queue.pop_front() {
        let dt = dist[&key(&t)];
        neighbours(&t, shapes, &mut buf);
        for n in buf.drain(..) {
            let k = key(&n);
            if let std::collections::hash_map::Entry::Vacant(v) = dist.entry(k) {
                v.insert(dt + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

pub fn to_doc(t: &Tree) -> Document {
    fn build(t: &Tree, i: &mut usize, depth: u8) -> Vec<ContentElement> {
        let mut out = Vec::new();
        while *i < t.len() && t[*i].0 == depth {
            let label = if t[*i].1 == 0 { "a" } else { "b" };
            *i += 1;
            let mut e = ContentElement::new(ElementKind::Paragraph).with_attr("label", label);
            e.children = build(t, i, depth + 1);
            out.push(e);
        }
        out
    }
    let mut root = ContentElement::new(ElementKind::Theory);
    root.children = build(t, &mut 0, 1);
    Document::new("t", root)
}

/// Sources: every tree with at most two non-root nodes plus `sampled`
/// seeded larger ones. Targets: every tree with at most `COMPARED`
/// non-root nodes.
pub fn cases(sampled: usize, seed: u64) -> (Vec<Tree>, Vec<Tree>) {
    let targets = forests(COMPARED);
    let mut sources: Vec<Tree> = targets.iter().filter(|t| t.len() <= 2).cloned().collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let larger: Vec<&Tree> = targets.iter().filter(|t| t.len() > 2).collect();
    sources.extend(
        larger
            .choose_multiple(&mut rng, sampled)
            .map(|t| (*t).clone()),
    );
    (sources, targets)
}

/// Diffs every source against every target in both directions and
/// compares script lengths with the search distance. Returns the number
/// of scripts checked.
pub fn check_minimality(sources: &[Tree], targets: &[Tree]) -> Result<usize, String> {
    let shapes = shapes(SPACE);
    let model = SimilarityModel::default();
    let mut checked = 0usize;
    for s in sources {
        let dist = distances(s, &shapes);
        let sd = to_doc(s);
        for t in targets {
            let td = to_doc(t);
            let expected = dist[&key(t)] as usize;
            for (a, b, ad, bd) in [(s, t, &sd, &td), (t, s, &td, &sd)] {
                let script = diff(ad, bd, &model);
                let applied =
                    apply_script(ad, &script).map_err(|e| format!("{a:?} -> {b:?}: {e}"))?;
                if !applied.structurally_eq(bd) {
                    return Err(format!(
                        "{a:?} -> {b:?}: script does not reproduce the target"
                    ));
                }
                if script.len() != expected {
                    return Err(format!(
                        "{a:?} -> {b:?}: {} operations, optimum {expected}: {script:?}",
                        script.len()
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}
