//! Random edits of document trees.

use flexicia_core::doc::{ContentElement, ElementKind};
use rand::rngs::StdRng;
use rand::Rng;

pub fn paths(e: &ContentElement) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn go(e: &ContentElement, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(p.clone());
        for (i, c) in e.children.iter().enumerate() {
            p.push(i);
            go(c, p, out);
            p.pop();
        }
    }
    go(e, &mut Vec::new(), &mut out);
    out
}

pub fn text_paths(e: &ContentElement) -> Vec<Vec<usize>> {
    paths(e)
        .into_iter()
        .filter(|p| e.at_path(p).unwrap().is_text())
        .collect()
}

pub const WORDS: [&str; 6] = ["tree", "node", "graph", "leaf", "depth", "edge"];

pub fn change_word(text: &str, rng: &mut StdRng) -> String {
    let mut words: Vec<String> = text.split(' ').map(str::to_string).collect();
    let i = rng.gen_range(0..words.len());
    words[i] = WORDS[rng.gen_range(0..WORDS.len())].to_string();
    words.join(" ")
}

pub fn mutate(root: &mut ContentElement, rng: &mut StdRng) {
    let all = paths(root);
    let non_root: Vec<_> = all.iter().filter(|p| !p.is_empty()).cloned().collect();
    let containers: Vec<_> = all
        .iter()
        .filter(|p| !root.at_path(p).unwrap().is_text())
        .cloned()
        .collect();
    match rng.gen_range(0..6) {
        0 => {
            let texts = text_paths(root);
            if let Some(p) = texts.get(rng.gen_range(0..texts.len().max(1))) {
                let t = root.at_path_mut(p).unwrap();
                let changed = change_word(t.text.as_deref().unwrap_or(""), rng);
                t.text = Some(changed);
            }
        }
        1 => {
            let p = &non_root[rng.gen_range(0..non_root.len())];
            let (last, parent) = p.split_last().unwrap();
            root.at_path_mut(parent).unwrap().children.remove(*last);
        }
        2 => {
            let parent = &containers[rng.gen_range(0..containers.len())];
            let n = root.at_path(parent).unwrap().children.len();
            let fresh = ContentElement::new(ElementKind::Paragraph)
                .with_child(ContentElement::text(WORDS[rng.gen_range(0..WORDS.len())]));
            root.at_path_mut(parent)
                .unwrap()
                .children
                .insert(rng.gen_range(0..=n), fresh);
        }
        3 => {
            let p = non_root[rng.gen_range(0..non_root.len())].clone();
            let (last, parent) = p.split_last().unwrap();
            let node = root.at_path_mut(parent).unwrap().children.remove(*last);
            let targets: Vec<_> = paths(root)
                .into_iter()
                .filter(|q| !root.at_path(q).unwrap().is_text())
                .collect();
            let q = &targets[rng.gen_range(0..targets.len())];
            let t = root.at_path_mut(q).unwrap();
            let pos = rng.gen_range(0..=t.children.len());
            t.children.insert(pos, node);
        }
        4 => {
            let p = &containers[rng.gen_range(0..containers.len())];
            let e = root.at_path_mut(p).unwrap();
            let key = ["title", "type", "name", "xml:id"][rng.gen_range(0..4)];
            if rng.gen_bool(0.3) {
                e.set_attr(key, None);
            } else {
                e.set_attr(key, Some(format!("v{}", rng.gen_range(0..100))));
            }
        }
        _ => {
            let parent = &containers[rng.gen_range(0..containers.len())];
            let e = root.at_path_mut(parent).unwrap();
            if e.children.len() >= 2 {
                let i = rng.gen_range(0..e.children.len() - 1);
                e.children.swap(i, i + 1);
            }
        }
    }
}
