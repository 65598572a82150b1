use crate::doc::ContentElement;

#[cfg(test)]
use super::model::lcs_len;
use super::model::{text_similarity, SimilarityModel};

/// Trees with at most this many nodes on both sides are matched by
/// exhaustive search for a cheapest matching.
pub const EXACT_LIMIT: usize = 7;

/// A tree flattened in pre-order.
pub(crate) struct Flat<'a> {
    pub nodes: Vec<&'a ContentElement>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl<'a> Flat<'a> {
    pub fn new(root: &'a ContentElement) -> Self {
        let mut f = Flat {
            nodes: Vec::new(),
            parent: Vec::new(),
            children: Vec::new(),
        };
        f.push(root, None);
        f
    }

    fn push(&mut self, e: &'a ContentElement, parent: Option<usize>) -> usize {
        let i = self.nodes.len();
        self.nodes.push(e);
        self.parent.push(parent);
        self.children.push(Vec::new());
        for c in &e.children {
            let ci = self.push(c, Some(i));
            self.children[i].push(ci);
        }
        i
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// Pairs of old and new pre-order indices. The roots are always paired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub old_to_new: Vec<Option<usize>>,
    pub new_to_old: Vec<Option<usize>>,
}

impl Matching {
    fn new(old_len: usize, new_len: usize) -> Self {
        let mut m = Matching {
            old_to_new: vec![None; old_len],
            new_to_old: vec![None; new_len],
        };
        m.pair(0, 0);
        m
    }

    fn pair(&mut self, x: usize, y: usize) {
        self.old_to_new[x] = Some(y);
        self.new_to_old[y] = Some(x);
    }

    fn unpair(&mut self, x: usize) {
        if let Some(y) = self.old_to_new[x].take() {
            self.new_to_old[y] = None;
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.old_to_new
            .iter()
            .enumerate()
            .filter_map(|(x, y)| y.map(|y| (x, y)))
    }
}

fn compatible(a: &ContentElement, b: &ContentElement) -> bool {
    a.kind == b.kind
        && match (a.id.as_deref(), b.id.as_deref()) {
            (Some(x), Some(y)) => x == y,
            _ => true,
        }
}

/// Number of update operations needed to turn `a` into `b`.
pub(crate) fn update_cost(a: &ContentElement, b: &ContentElement) -> usize {
    let (aa, ba) = (a.all_attributes(), b.all_attributes());
    let mut n = aa.iter().filter(|(k, v)| ba.get(*k) != Some(*v)).count();
    n += ba.keys().filter(|k| !aa.contains_key(*k)).count();
    if a.text != b.text {
        n += 1;
    }
    n
}

/// Length of the edit script the generator emits for `m`.
#[cfg(test)]
pub(crate) fn matching_cost(old: &Flat<'_>, new: &Flat<'_>, m: &Matching) -> usize {
    let mut cost = 0;
    for y in 1..new.len() {
        let py = new.parent[y].expect("non-root");
        match m.new_to_old[y] {
            None if m.new_to_old[py].is_some() => cost += 1,
            None => {}
            Some(x) => {
                cost += update_cost(old.nodes[x], new.nodes[y]);
                if old.parent[x].and_then(|px| m.old_to_new[px]) != Some(py) {
                    cost += 1;
                }
            }
        }
    }
    for x in 1..old.len() {
        let px = old.parent[x].expect("non-root");
        if m.old_to_new[x].is_none() && m.old_to_new[px].is_some() {
            cost += 1;
        }
    }
    for (px, py) in m.pairs() {
        // children that keep their parent, in new order, by old position
        let stay: Vec<usize> = new.children[py]
            .iter()
            .filter_map(|&c| m.new_to_old[c])
            .filter(|&x| old.parent[x] == Some(px))
            .collect();
        let mut sorted = stay.clone();
        sorted.sort_unstable();
        cost += stay.len() - lcs_len(&stay, &sorted);
    }
    cost + update_cost(old.nodes[0], new.nodes[0])
}

pub(crate) fn id_partner(new: &Flat<'_>, x: &ContentElement) -> Option<usize> {
    let id = x.id.as_deref()?;
    (1..new.len()).find(|&y| new.nodes[y].id.as_deref() == Some(id) && new.nodes[y].kind == x.kind)
}

/// Cheapest matching by exhaustive search. Elements whose `xml:id` appears
/// on both sides are always paired.
///
/// Old nodes are assigned in pre-order, so when a node is decided its
/// parent already is; update, parent-change and delete costs are then
/// known and give a lower bound used for pruning. Insert and reorder costs
/// are added once the assignment is complete.
fn exact(old: &Flat<'_>, new: &Flat<'_>) -> Matching {
    struct Search<'s, 'a> {
        old: &'s Flat<'a>,
        new: &'s Flat<'a>,
        forced: Vec<Option<usize>>,
        compatible: Vec<Vec<bool>>,
        update: Vec<Vec<usize>>,
        taken: Vec<bool>,
        m: Matching,
        best: Option<(usize, Matching)>,
    }

    impl Search<'_, '_> {
        fn completion_cost(&self) -> usize {
            let m = &self.m;
            let mut cost = 0;
            for y in 1..self.new.len() {
                let py = self.new.parent[y].expect("non-root");
                if m.new_to_old[y].is_none() && m.new_to_old[py].is_some() {
                    cost += 1;
                }
            }
            let mut stay = Vec::new();
            for (px, py) in m.pairs() {
                stay.clear();
                stay.extend(
                    self.new.children[py]
                        .iter()
                        .filter_map(|&c| m.new_to_old[c])
                        .filter(|&x| self.old.parent[x] == Some(px)),
                );
                cost += stay.len() - lcs_indices(&stay).len();
            }
            cost
        }

        fn go(&mut self, x: usize, partial: usize) {
            if self.best.as_ref().is_some_and(|(b, _)| partial >= *b) {
                return;
            }
            if x == self.old.len() {
                let c = partial + self.completion_cost();
                if self.best.as_ref().is_none_or(|(b, _)| c < *b) {
                    self.best = Some((c, self.m.clone()));
                }
                return;
            }
            let px = self.old.parent[x].expect("non-root");
            let parent_image = self.m.old_to_new[px];
            let step =
                |s: &Self, y: usize| s.update[x][y] + usize::from(parent_image != s.new.parent[y]);
            let candidates: Vec<usize> = match self.forced[x] {
                Some(y) => vec![y],
                None => (1..self.new.len())
                    .filter(|&y| !self.taken[y] && self.compatible[x][y])
                    .collect(),
            };
            for y in candidates {
                let c = step(self, y);
                self.taken[y] = true;
                self.m.pair(x, y);
                self.go(x + 1, partial + c);
                self.m.unpair(x);
                self.taken[y] = false;
            }
            if self.forced[x].is_none() {
                self.go(x + 1, partial + usize::from(parent_image.is_some()));
            }
        }
    }

    let mut forced: Vec<Option<usize>> = vec![None; old.len()];
    let mut taken = vec![false; new.len()];
    taken[0] = true;
    for (x, slot) in forced.iter_mut().enumerate().skip(1) {
        if let Some(y) = id_partner(new, old.nodes[x]) {
            *slot = Some(y);
            taken[y] = true;
        }
    }
    let compatible = (0..old.len())
        .map(|x| {
            (0..new.len())
                .map(|y| compatible(old.nodes[x], new.nodes[y]))
                .collect()
        })
        .collect();
    let update = (0..old.len())
        .map(|x| {
            (0..new.len())
                .map(|y| update_cost(old.nodes[x], new.nodes[y]))
                .collect()
        })
        .collect();
    let mut s = Search {
        old,
        new,
        forced,
        compatible,
        update,
        taken,
        m: Matching::new(old.len(), new.len()),
        best: None,
    };
    let root = s.update[0][0];
    s.go(1, root);
    s.best.expect("the empty matching is always a candidate").1
}

struct Greedy<'a, 'b> {
    old: &'b Flat<'a>,
    new: &'b Flat<'a>,
    model: &'b SimilarityModel,
    old_text: Vec<String>,
    new_text: Vec<String>,
    m: Matching,
}

impl Greedy<'_, '_> {
    fn keys_equal(&self, x: usize, y: usize) -> bool {
        let (a, b) = (self.old.nodes[x], self.new.nodes[y]);
        let keys = &self.model.kind(a.kind).keys;
        !keys.is_empty()
            && keys
                .iter()
                .all(|k| a.attr(k).unwrap_or("") == b.attr(k).unwrap_or(""))
    }

    fn similarity(&self, x: usize, y: usize) -> f64 {
        text_similarity(&self.old_text[x], &self.new_text[y])
    }

    fn candidate(&self, x: usize, y: usize) -> bool {
        self.m.old_to_new[x].is_none() && compatible(self.old.nodes[x], self.new.nodes[y])
    }

    /// Pairs the unmatched children of a matched pair by key, then text,
    /// then sibling position.
    fn children(&mut self, px: usize, py: usize) -> bool {
        let mut changed = false;
        let ys: Vec<usize> = self.new.children[py]
            .iter()
            .copied()
            .filter(|&y| self.m.new_to_old[y].is_none())
            .collect();
        let xs: Vec<usize> = self.old.children[px].clone();
        for &y in &ys {
            if let Some(x) = xs
                .iter()
                .copied()
                .find(|&x| self.candidate(x, y) && self.keys_equal(x, y))
            {
                self.m.pair(x, y);
                changed = true;
            }
        }
        for &y in &ys {
            if self.m.new_to_old[y].is_some() {
                continue;
            }
            let threshold = self.model.kind(self.new.nodes[y].kind).threshold;
            let best = xs
                .iter()
                .copied()
                .filter(|&x| self.candidate(x, y))
                .map(|x| (x, self.similarity(x, y)))
                .filter(|&(_, s)| s >= threshold)
                .fold(None, |acc: Option<(usize, f64)>, (x, s)| match acc {
                    Some((_, b)) if b >= s => acc,
                    _ => Some((x, s)),
                });
            if let Some((x, _)) = best {
                self.m.pair(x, y);
                changed = true;
            }
        }
        for &y in &ys {
            let kind = self.new.nodes[y].kind;
            if self.m.new_to_old[y].is_some() || !self.model.kind(kind).position {
                continue;
            }
            if let Some(x) = xs.iter().copied().find(|&x| self.candidate(x, y)) {
                self.m.pair(x, y);
                changed = true;
            }
        }
        changed
    }

    /// Pairs leftover new elements with leftover old elements anywhere in
    /// the tree when they agree on keys and text; these become moves.
    fn moves(&mut self) -> bool {
        let mut changed = false;
        for y in 1..self.new.len() {
            if self.m.new_to_old[y].is_some() {
                continue;
            }
            let kind = self.new.nodes[y].kind;
            let threshold = self.model.kind(kind).threshold;
            let has_keys = !self.model.kind(kind).keys.is_empty();
            let found = (1..self.old.len()).find(|&x| {
                self.candidate(x, y)
                    && (!has_keys || self.keys_equal(x, y))
                    && !self.new_text[y].trim().is_empty()
                    && self.similarity(x, y) >= threshold
            });
            if let Some(x) = found {
                self.m.pair(x, y);
                changed = true;
            }
        }
        changed
    }

    fn run(mut self) -> Matching {
        for x in 1..self.old.len() {
            if let Some(y) = id_partner(self.new, self.old.nodes[x]) {
                self.m.pair(x, y);
            }
        }
        loop {
            for y in 0..self.new.len() {
                if let Some(x) = self.m.new_to_old[y] {
                    self.children(x, y);
                }
            }
            if !self.moves() {
                return self.m;
            }
        }
    }
}

/// Matches two trees: exhaustively when both are small, otherwise greedily
/// by `xml:id`, key attributes, text similarity and position.
pub fn match_trees(
    old: &ContentElement,
    new: &ContentElement,
    model: &SimilarityModel,
) -> Matching {
    let (fo, fnew) = (Flat::new(old), Flat::new(new));
    matching_for(&fo, &fnew, model)
}

pub(crate) fn matching_for(old: &Flat<'_>, new: &Flat<'_>, model: &SimilarityModel) -> Matching {
    if old.len() <= EXACT_LIMIT && new.len() <= EXACT_LIMIT {
        return exact(old, new);
    }
    let old_text = old.nodes.iter().map(|e| e.text_content()).collect();
    let new_text = new.nodes.iter().map(|e| e.text_content()).collect();
    Greedy {
        old,
        new,
        model,
        old_text,
        new_text,
        m: Matching::new(old.len(), new.len()),
    }
    .run()
}

/// Indices into `seq` of one longest strictly increasing subsequence.
pub(crate) fn lcs_indices(seq: &[usize]) -> Vec<usize> {
    let n = seq.len();
    let mut len = vec![1usize; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        for j in 0..i {
            if seq[j] < seq[i] && len[j] + 1 > len[i] {
                len[i] = len[j] + 1;
                prev[i] = Some(j);
            }
        }
    }
    let Some(mut at) = (0..n).max_by_key(|&i| (len[i], std::cmp::Reverse(i))) else {
        return Vec::new();
    };
    let mut out = vec![at];
    while let Some(p) = prev[at] {
        out.push(p);
        at = p;
    }
    out.reverse();
    out
}
