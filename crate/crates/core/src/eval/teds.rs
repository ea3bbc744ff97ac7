//! Ordered labeled trees and tree-edit-distance similarity.
//!
//! The edit distance uses unit insert/delete costs and a relabel cost of 0
//! for equal labels, 1 otherwise, computed with the Zhang-Shasha keyroot
//! dynamic program. Similarity is `1 - distance / max(|A|, |B|)`.

use serde::{Deserialize, Serialize};

use crate::text::squash_whitespace;

/// Ordered rooted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTree {
    labels: Vec<String>,
    children: Vec<Vec<usize>>,
}

impl LabeledTree {
    pub fn new(root_label: impl Into<String>) -> Self {
        LabeledTree { labels: vec![root_label.into()], children: vec![Vec::new()] }
    }

    /// Append a child as the last child of `parent`; returns its id.
    pub fn add_child(&mut self, parent: usize, label: impl Into<String>) -> usize {
        let id = self.labels.len();
        self.labels.push(label.into());
        self.children.push(Vec::new());
        self.children[parent].push(id);
        id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Build a title-hierarchy tree from `(label, level)` in reading order:
    /// each title's parent is the nearest preceding title with a strictly
    /// smaller level, or the root.
    pub fn from_levels<S: AsRef<str>>(items: &[(S, u32)]) -> Self {
        let mut t = LabeledTree::new("");
        let mut stack: Vec<(u32, usize)> = Vec::new();
        for (label, level) in items {
            while stack.last().is_some_and(|&(l, _)| l >= *level) {
                stack.pop();
            }
            let parent = stack.last().map_or(0, |&(_, id)| id);
            let id = t.add_child(parent, normalize_label(label.as_ref()));
            stack.push((*level, id));
        }
        t
    }

    /// Bracket notation, e.g. `{a{b}{c}}`.
    pub fn to_bracket(&self) -> String {
        fn go(t: &LabeledTree, id: usize, out: &mut String) {
            out.push('{');
            out.push_str(&t.labels[id]);
            for &c in &t.children[id] {
                go(t, c, out);
            }
            out.push('}');
        }
        let mut s = String::new();
        go(self, 0, &mut s);
        s
    }
}

/// Lowercased, whitespace-squashed title text.
pub fn normalize_label(s: &str) -> String {
    squash_whitespace(&s.to_lowercase())
}

/// Postorder arrays used by the dynamic program.
#[derive(Debug, Clone)]
pub struct PostTree {
    labels: Vec<String>,
    /// Leftmost leaf descendant of each node, in postorder numbering.
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

impl PostTree {
    pub fn new(t: &LabeledTree) -> Self {
        let n = t.len();
        let mut labels = Vec::with_capacity(n);
        let mut lml = Vec::with_capacity(n);
        fn go(t: &LabeledTree, id: usize, labels: &mut Vec<String>, lml: &mut Vec<usize>) -> usize {
            let mut first = None;
            for &c in &t.children[id] {
                let leaf = go(t, c, labels, lml);
                first.get_or_insert(leaf);
            }
            let me = labels.len();
            labels.push(t.labels[id].clone());
            let leftmost = first.unwrap_or(me);
            lml.push(leftmost);
            leftmost
        }
        go(t, 0, &mut labels, &mut lml);
        let mut keyroots: Vec<usize> = (0..n).filter(|&k| !(k + 1..n).any(|k2| lml[k2] == lml[k])).collect();
        keyroots.sort_unstable();
        PostTree { labels, lml, keyroots }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reusable scratch buffers for repeated distance computations.
#[derive(Debug, Default)]
pub struct TedWorkspace {
    td: Vec<usize>,
    fd: Vec<usize>,
}

pub fn tree_edit_distance_post(a: &PostTree, b: &PostTree, ws: &mut TedWorkspace) -> usize {
    let (n1, n2) = (a.len(), b.len());
    ws.td.clear();
    ws.td.resize(n1 * n2, 0);
    let w = n2 + 1;
    ws.fd.clear();
    ws.fd.resize((n1 + 1) * w, 0);
    let (td, fd) = (&mut ws.td, &mut ws.fd);
    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.lml[i], b.lml[j]);
            fd[0] = 0;
            for x in li..=i {
                let dx = x - li + 1;
                fd[dx * w] = fd[(dx - 1) * w] + 1;
            }
            for y in lj..=j {
                let dy = y - lj + 1;
                fd[dy] = fd[dy - 1] + 1;
            }
            for x in li..=i {
                let dx = x - li + 1;
                for y in lj..=j {
                    let dy = y - lj + 1;
                    let del = fd[(dx - 1) * w + dy] + 1;
                    let ins = fd[dx * w + dy - 1] + 1;
                    let v = if a.lml[x] == li && b.lml[y] == lj {
                        let rel = fd[(dx - 1) * w + dy - 1] + usize::from(a.labels[x] != b.labels[y]);
                        let v = del.min(ins).min(rel);
                        td[x * n2 + y] = v;
                        v
                    } else {
                        let sub = fd[(a.lml[x] - li) * w + (b.lml[y] - lj)] + td[x * n2 + y];
                        del.min(ins).min(sub)
                    };
                    fd[dx * w + dy] = v;
                }
            }
        }
    }
    td[(n1 - 1) * n2 + (n2 - 1)]
}

pub fn tree_edit_distance(a: &LabeledTree, b: &LabeledTree) -> usize {
    tree_edit_distance_post(&PostTree::new(a), &PostTree::new(b), &mut TedWorkspace::default())
}

pub fn teds(pred: &LabeledTree, gold: &LabeledTree) -> f64 {
    let d = tree_edit_distance(pred, gold);
    let n = pred.len().max(gold.len());
    // (n - d) / n rather than 1 - d / n keeps simple ratios exact.
    n.saturating_sub(d) as f64 / n as f64
}
