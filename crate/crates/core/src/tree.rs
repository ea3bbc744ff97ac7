//! Document tree assembly and paragraph-level node chunking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::apply::ResolvedDocument;
use crate::element::{CanonicalElement, ElementType, PageBox};
use crate::error::Flag;

pub const DEFAULT_NODE_CHUNK_CHARS: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Section,
    Subnode,
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyElement {
    pub idx: usize,
    pub etype: ElementType,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_html: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_ref: Option<String>,
    /// This paragraph is the tail of a truncated one; never split before it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub continues_previous: bool,
    pub spans: Vec<PageBox>,
}

impl BodyElement {
    fn new(e: &CanonicalElement, spans: Vec<PageBox>) -> Self {
        BodyElement {
            idx: e.idx,
            etype: e.etype,
            content: e.content.clone(),
            table_html: e.table_html.clone(),
            asset_ref: e.asset_ref.clone(),
            continues_previous: false,
            spans,
        }
    }

    pub fn char_len(&self) -> usize {
        self.content.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocNode {
    pub node_id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_idx: Option<usize>,
    pub level: u32,
    pub body: Vec<BodyElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    pub title_path: Vec<String>,
    pub children: Vec<DocNode>,
    pub bboxes: Vec<PageBox>,
}

impl DocNode {
    /// Reading-order position used to order siblings.
    pub fn anchor(&self) -> usize {
        self.title_idx.or_else(|| self.body.first().map(|b| b.idx)).unwrap_or(0)
    }

    pub fn walk<'a>(&'a self, out: &mut Vec<&'a DocNode>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }

    fn walk_mut(&mut self, f: &mut dyn FnMut(&mut DocNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }

    fn refresh_bboxes(&mut self, title_span: &[PageBox]) {
        self.bboxes = title_span.iter().copied().chain(self.body.iter().flat_map(|b| b.spans.iter().copied())).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocTree {
    pub doc_id: String,
    pub root: DocNode,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl DocTree {
    pub fn nodes(&self) -> Vec<&DocNode> {
        let mut out = Vec::new();
        self.root.walk(&mut out);
        out
    }

    pub fn nodes_mut(&mut self, mut f: impl FnMut(&mut DocNode)) {
        self.root.walk_mut(&mut f);
    }

    /// Every element idx referenced by the tree, titles included, in
    /// traversal order.
    pub fn element_ids(&self) -> Vec<usize> {
        self.nodes()
            .iter()
            .flat_map(|n| n.title_idx.into_iter().chain(n.body.iter().map(|b| b.idx)))
            .collect()
    }
}

struct Draft {
    node: DocNode,
    parent: usize,
}

pub fn build_tree(doc: &ResolvedDocument) -> DocTree {
    let mut flags = Vec::new();
    let spans = |e: &CanonicalElement| doc.spans.get(&e.idx).cloned().unwrap_or_else(|| vec![e.page_box()]);
    let mut arena = vec![Draft {
        node: DocNode {
            node_id: "root".into(),
            kind: NodeKind::Root,
            title_text: None,
            title_idx: None,
            level: 0,
            body: Vec::new(),
            summary: None,
            title_path: Vec::new(),
            children: Vec::new(),
            bboxes: Vec::new(),
        },
        parent: usize::MAX,
    }];

    // Pass 1: sections, and which section is open at every position.
    let mut section_of_title: BTreeMap<usize, usize> = BTreeMap::new();
    let mut open_at = Vec::with_capacity(doc.elements.len());
    let mut stack: Vec<(u32, usize)> = Vec::new();
    for e in &doc.elements {
        if let Some(&level) = doc.levels.get(&e.idx).filter(|_| e.etype == ElementType::Title) {
            while stack.last().is_some_and(|&(l, _)| l >= level) {
                stack.pop();
            }
            let parent = stack.last().map_or(0, |&(_, id)| id);
            arena.push(Draft {
                node: DocNode {
                    node_id: format!("s{}", e.idx),
                    kind: NodeKind::Section,
                    title_text: Some(e.content.clone()),
                    title_idx: Some(e.idx),
                    level,
                    body: Vec::new(),
                    summary: None,
                    title_path: Vec::new(),
                    children: Vec::new(),
                    bboxes: spans(e),
                },
                parent,
            });
            let id = arena.len() - 1;
            stack.push((level, id));
            section_of_title.insert(e.idx, id);
        }
        open_at.push(stack.last().map_or(0, |&(_, id)| id));
    }

    // Pass 2: everything else.
    let mut captions_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&cap, &vis) in &doc.caption_links {
        captions_of.entry(vis).or_default().push(cap);
    }
    for (pos, e) in doc.elements.iter().enumerate() {
        if section_of_title.contains_key(&e.idx) || doc.caption_links.contains_key(&e.idx) {
            continue;
        }
        if e.etype.is_independent() {
            arena[0].node.body.push(BodyElement::new(e, spans(e)));
        } else if e.etype.is_visual() {
            let parent = match doc.section_links.get(&e.idx).and_then(|t| section_of_title.get(t)) {
                Some(&id) => id,
                None => {
                    flags.push(Flag::info(
                        "tree.UnlinkedVisual",
                        format!("{} {} placed under the enclosing section", e.etype, e.idx),
                    ));
                    open_at[pos]
                }
            };
            let mut body = vec![BodyElement::new(e, spans(e))];
            for &c in captions_of.get(&e.idx).map(Vec::as_slice).unwrap_or(&[]) {
                if let Some(ce) = doc.element(c) {
                    body.push(BodyElement::new(ce, spans(ce)));
                }
            }
            body.sort_by_key(|b| b.idx);
            let level = arena[parent].node.level;
            let mut node = DocNode {
                node_id: format!("v{}", e.idx),
                kind: NodeKind::Visual,
                title_text: None,
                title_idx: None,
                level,
                body,
                summary: None,
                title_path: Vec::new(),
                children: Vec::new(),
                bboxes: Vec::new(),
            };
            node.refresh_bboxes(&[]);
            arena.push(Draft { node, parent });
        } else {
            let id = open_at[pos];
            arena[id].node.body.push(BodyElement::new(e, spans(e)));
        }
    }

    // Assemble bottom-up; arena order is parent-before-child.
    for id in (1..arena.len()).rev() {
        let node = std::mem::replace(&mut arena[id].node, placeholder());
        let parent = arena[id].parent;
        arena[parent].node.children.push(node);
    }
    let mut root = std::mem::replace(&mut arena[0].node, placeholder());
    finish(&mut root, &[]);
    DocTree { doc_id: doc.doc_id.clone(), root, flags }
}

fn placeholder() -> DocNode {
    DocNode {
        node_id: String::new(),
        kind: NodeKind::Root,
        title_text: None,
        title_idx: None,
        level: 0,
        body: Vec::new(),
        summary: None,
        title_path: Vec::new(),
        children: Vec::new(),
        bboxes: Vec::new(),
    }
}

/// Sort children into reading order, fill title paths and bboxes.
fn finish(node: &mut DocNode, parent_path: &[String]) {
    node.title_path = parent_path.to_vec();
    if let (NodeKind::Section, Some(t)) = (node.kind, &node.title_text) {
        node.title_path.push(t.clone());
    }
    if node.kind != NodeKind::Section {
        node.refresh_bboxes(&[]);
    } else {
        let title_span: Vec<PageBox> = node.bboxes.first().copied().into_iter().collect();
        node.refresh_bboxes(&title_span);
    }
    node.children.sort_by_key(DocNode::anchor);
    let path = node.title_path.clone();
    for c in &mut node.children {
        finish(c, &path);
    }
}

/// Split the paragraphs of each section (and the root preamble) into
/// subnodes of at least `threshold` characters. A subnode closes after the
/// paragraph at which its running length reaches the threshold, unless the
/// next paragraph continues a truncated one, in which case the split moves
/// to the next allowed boundary.
pub fn chunk_nodes(tree: &mut DocTree, threshold: usize) {
    let threshold = threshold.max(1);
    chunk_node(&mut tree.root, threshold);
}

/// Group sizes produced by the accumulation rule.
pub fn split_points(body: &[BodyElement], threshold: usize) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut running = 0;
    for i in 0..body.len() {
        running += body[i].char_len();
        let next_is_join = body.get(i + 1).is_some_and(|b| b.continues_previous);
        if running >= threshold && i + 1 < body.len() && !next_is_join {
            groups.push(i + 1 - start);
            start = i + 1;
            running = 0;
        }
    }
    groups.push(body.len() - start);
    groups
}

fn chunk_node(node: &mut DocNode, threshold: usize) {
    for c in &mut node.children {
        chunk_node(c, threshold);
    }
    if !matches!(node.kind, NodeKind::Section | NodeKind::Root) {
        return;
    }
    // Page furniture stays on the root itself.
    let (furniture, mut flow): (Vec<BodyElement>, Vec<BodyElement>) =
        std::mem::take(&mut node.body).into_iter().partition(|b| b.etype.is_independent());
    let groups = split_points(&flow, threshold);
    if groups.len() <= 1 {
        node.body = furniture.into_iter().chain(flow).collect();
        node.body.sort_by_key(|b| b.idx);
        return;
    }
    for (k, n) in groups.into_iter().enumerate() {
        let rest = flow.split_off(n);
        let mut sub = DocNode {
            node_id: format!("{}.{}", node.node_id, k + 1),
            kind: NodeKind::Subnode,
            title_text: None,
            title_idx: None,
            level: node.level,
            body: std::mem::replace(&mut flow, rest),
            summary: None,
            title_path: node.title_path.clone(),
            children: Vec::new(),
            bboxes: Vec::new(),
        };
        sub.refresh_bboxes(&[]);
        node.children.push(sub);
    }
    node.body = furniture;
    let title_span: Vec<PageBox> = if node.kind == NodeKind::Section {
        node.bboxes.first().copied().into_iter().collect()
    } else {
        Vec::new()
    };
    node.refresh_bboxes(&title_span);
    node.children.sort_by_key(DocNode::anchor);
}

/// Checks the structural invariants; returns a description of each
/// violation.
pub fn check_tree(tree: &DocTree, doc: &ResolvedDocument) -> Vec<String> {
    let mut problems = Vec::new();
    let ids = tree.element_ids();
    let unique: BTreeSet<usize> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        problems.push("an element appears in more than one node".to_string());
    }
    let expected: BTreeSet<usize> = doc.elements.iter().map(|e| e.idx).collect();
    if unique != expected {
        problems.push(format!(
            "element sets differ: {} in tree, {} in document",
            unique.len(),
            expected.len()
        ));
    }
    fn levels(node: &DocNode, problems: &mut Vec<String>) {
        for c in &node.children {
            if c.kind == NodeKind::Section && c.level <= node.level {
                problems.push(format!("{} level {} under {} level {}", c.node_id, c.level, node.node_id, node.level));
            }
            let anchors: Vec<usize> = node.children.iter().map(DocNode::anchor).collect();
            if anchors.windows(2).any(|w| w[0] > w[1]) {
                problems.push(format!("children of {} out of order", node.node_id));
            }
            levels(c, problems);
        }
    }
    levels(&tree.root, &mut problems);
    problems.dedup();
    problems
}
