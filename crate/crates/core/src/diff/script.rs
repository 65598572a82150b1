use std::collections::VecDeque;

use crate::doc::{ContentElement, Document};

use super::matching::{lcs_indices, matching_for, Flat, Matching};
use super::model::SimilarityModel;
use super::{EditOp, EditScript, Path, TaggedTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Old(usize),
    New(usize),
}

struct Gen<'a, 'b> {
    old: &'b Flat<'a>,
    new: &'b Flat<'a>,
    m: &'b Matching,
    work: TaggedTree<Tag>,
    ops: Vec<EditOp>,
}

impl Gen<'_, '_> {
    /// Tag of the working-tree node standing for new node `y`, if placed.
    fn partner(&self, y: usize) -> Tag {
        match self.m.new_to_old[y] {
            Some(x) => Tag::Old(x),
            None => Tag::New(y),
        }
    }

    fn path_of(&self, tag: Tag) -> Option<Path> {
        let mut found = None;
        self.work.walk(&mut |p, n| {
            if found.is_none() && n.tag == Some(tag) {
                found = Some(p.clone());
            }
        });
        found
    }

    fn placed(&self, tag: Tag) -> Path {
        self.path_of(tag)
            .expect("processed nodes are present in the working tree")
    }

    fn index_in(&self, parent: &Path, tag: Tag) -> Option<usize> {
        self.work
            .at(parent)
            .expect("parent present")
            .children
            .iter()
            .position(|c| c.tag == Some(tag))
    }

    fn push(&mut self, op: EditOp) {
        self.work
            .apply(&op)
            .expect("generated operations are valid");
        self.ops.push(op);
    }

    fn updates(&mut self, x: usize, y: usize) {
        let (a, b) = (self.old.nodes[x], self.new.nodes[y]);
        let path = self.placed(Tag::Old(x));
        let (aa, ba) = (a.all_attributes(), b.all_attributes());
        let mut keys: Vec<&str> = aa.keys().chain(ba.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        for k in keys {
            if aa.get(k) != ba.get(k) {
                self.push(EditOp::UpdateAttr {
                    path: path.clone(),
                    key: k.to_string(),
                    value: ba.get(k).map(|v| v.to_string()),
                });
            }
        }
        if a.text != b.text {
            self.push(EditOp::UpdateText {
                path,
                text: b.text.clone().unwrap_or_default(),
            });
        }
    }

    /// The maximal subtree below `y` made of unmatched new nodes, and the
    /// new indices of its nodes in pre-order.
    fn insertion(&self, y: usize) -> (ContentElement, Vec<usize>) {
        let mut e = self.new.nodes[y].clone();
        e.children.clear();
        let mut order = vec![y];
        for &c in &self.new.children[y] {
            if self.m.new_to_old[c].is_none() {
                let (ce, co) = self.insertion(c);
                e.children.push(ce);
                order.extend(co);
            }
        }
        (e, order)
    }

    fn place_children(&mut self, p: usize) {
        let wp = self.placed(self.partner(p));
        let current: Vec<Option<Tag>> = self
            .work
            .at(&wp)
            .expect("placed")
            .children
            .iter()
            .map(|c| c.tag)
            .collect();
        // matched children already under this parent; a longest run in
        // the right order stays where it is
        let staying: Vec<(usize, usize)> = self.new.children[p]
            .iter()
            .filter_map(|&c| {
                let t = Tag::Old(self.m.new_to_old[c]?);
                current.iter().position(|x| *x == Some(t)).map(|i| (c, i))
            })
            .collect();
        let positions: Vec<usize> = staying.iter().map(|&(_, i)| i).collect();
        let keep: Vec<usize> = lcs_indices(&positions)
            .into_iter()
            .map(|k| staying[k].0)
            .collect();

        let mut prev: Option<Tag> = None;
        for &c in &self.new.children[p].clone() {
            let tag = self.partner(c);
            let pos_after = |g: &Self, parent: &Path| match prev {
                None => 0,
                Some(t) => g.index_in(parent, t).expect("previous sibling placed") + 1,
            };
            let already_new = matches!(tag, Tag::New(_)) && self.path_of(tag).is_some();
            if keep.contains(&c) || already_new {
                // in place
            } else if let Tag::Old(x) = tag {
                let path = self.placed(Tag::Old(x));
                let node = self.work.detach(&path).expect("valid path");
                let parent = self.placed(self.partner(p));
                let pos = pos_after(self, &parent);
                self.work
                    .attach(&parent, pos, node)
                    .expect("valid position");
                self.ops.push(EditOp::Move { path, parent, pos });
            } else {
                let (subtree, order) = self.insertion(c);
                let parent = self.placed(self.partner(p));
                let pos = pos_after(self, &parent);
                self.push(EditOp::Insert {
                    parent: parent.clone(),
                    pos,
                    subtree,
                });
                let mut path = parent;
                path.push(pos);
                let mut it = order.into_iter();
                fn retag(n: &mut TaggedTree<Tag>, it: &mut dyn Iterator<Item = usize>) {
                    n.tag = it.next().map(Tag::New);
                    for ch in &mut n.children {
                        retag(ch, it);
                    }
                }
                retag(self.work.at_mut(&path).expect("inserted"), &mut it);
            }
            if let Tag::Old(x) = tag {
                self.updates(x, c);
            }
            prev = Some(tag);
        }
    }

    fn deletes(&mut self) {
        let mut doomed: Vec<Path> = Vec::new();
        let m = self.m;
        let parent_kept = |t: Option<Tag>| match t {
            Some(Tag::Old(x)) => m.old_to_new[x].is_some(),
            Some(Tag::New(_)) => true,
            None => false,
        };
        fn collect(
            n: &TaggedTree<Tag>,
            path: &mut Path,
            m: &Matching,
            kept: &dyn Fn(Option<Tag>) -> bool,
            out: &mut Vec<Path>,
        ) {
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                let unmatched = matches!(c.tag, Some(Tag::Old(x)) if m.old_to_new[x].is_none());
                if unmatched && kept(n.tag) {
                    out.push(path.clone());
                } else {
                    collect(c, path, m, kept, out);
                }
                path.pop();
            }
        }
        collect(&self.work, &mut Vec::new(), m, &parent_kept, &mut doomed);
        for path in doomed.into_iter().rev() {
            self.push(EditOp::Delete { path });
        }
    }
}

/// Computes an edit script turning `old` into `new`.
///
/// # Panics
/// If the roots differ in kind; no script can change the root kind.
pub fn diff_elements(
    old: &ContentElement,
    new: &ContentElement,
    model: &SimilarityModel,
) -> EditScript {
    assert_eq!(old.kind, new.kind, "roots must have the same kind");
    let (fo, fnew) = (Flat::new(old), Flat::new(new));
    let m = matching_for(&fo, &fnew, model);
    let mut g = Gen {
        old: &fo,
        new: &fnew,
        m: &m,
        work: TaggedTree::build_indexed(old, Tag::Old),
        ops: Vec::new(),
    };
    g.updates(0, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(p) = queue.pop_front() {
        g.place_children(p);
        queue.extend(fnew.children[p].iter().copied());
    }
    g.deletes();
    debug_assert!(
        g.work.to_element() == *new,
        "edit script must reproduce the new tree"
    );
    EditScript { ops: g.ops }
}

/// Edit script between two versions of a document.
pub fn diff(old: &Document, new: &Document, model: &SimilarityModel) -> EditScript {
    diff_elements(&old.root, &new.root, model)
}
