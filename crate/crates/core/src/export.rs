//! Tree exporters: lossless JSON and coordinate-free Markdown.

use crate::element::ElementType;
use crate::tree::{DocNode, DocTree, NodeKind};

/// Pretty JSON with a fixed key order; parses back into an equal tree.
pub fn export_json(tree: &DocTree) -> String {
    let mut s = serde_json::to_string_pretty(tree).expect("tree serializes");
    s.push('\n');
    s
}

pub fn import_json(text: &str) -> Result<DocTree, serde_json::Error> {
    serde_json::from_str(text)
}

/// Markdown rendering: `#` repeated `level` times per title, paragraphs in
/// reading order, tables as HTML blocks, images as references followed by
/// their captions. Page headers and footers are omitted.
pub fn export_markdown(tree: &DocTree) -> String {
    let mut blocks: Vec<String> = Vec::new();
    render(&tree.root, &mut blocks);
    let mut out = blocks.join("\n\n");
    out.push('\n');
    out
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn render(node: &DocNode, out: &mut Vec<String>) {
    if node.kind == NodeKind::Section {
        let title = node.title_text.as_deref().map(one_line).unwrap_or_default();
        out.push(format!("{} {}", "#".repeat(node.level.max(1) as usize), title));
    }
    let alt = node
        .body
        .iter()
        .find(|b| b.etype == ElementType::ImageCaption)
        .map(|b| one_line(&b.content))
        .unwrap_or_else(|| "image".to_string());
    for b in &node.body {
        let text = b.content.trim();
        match b.etype {
            ElementType::PageHeader | ElementType::PageFooter => {}
            ElementType::Table => match &b.table_html {
                Some(html) => out.push(html.trim().to_string()),
                None if !text.is_empty() => out.push(text.to_string()),
                None => {}
            },
            ElementType::Image => {
                let src = b.asset_ref.as_deref().unwrap_or("");
                out.push(format!("![{}]({})", alt.replace(['[', ']'], ""), src));
            }
            _ if text.is_empty() => {}
            _ => out.push(text.to_string()),
        }
    }
    for c in &node.children {
        render(c, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{BBox, PageBox};
    use crate::tree::BodyElement;

    fn body(idx: usize, etype: ElementType, content: &str) -> BodyElement {
        BodyElement {
            idx,
            etype,
            content: content.into(),
            table_html: None,
            asset_ref: None,
            continues_previous: false,
            spans: vec![PageBox { page: 0, bbox: BBox::new(1.0, 2.0, 3.0, 4.0) }],
        }
    }

    fn node(kind: NodeKind, id: &str, level: u32, title: Option<&str>, body: Vec<BodyElement>) -> DocNode {
        DocNode {
            node_id: id.into(),
            kind,
            title_text: title.map(String::from),
            title_idx: None,
            level,
            body,
            summary: None,
            title_path: vec![],
            children: vec![],
            bboxes: vec![],
        }
    }

    #[test]
    fn root_only_tree() {
        let t = DocTree { doc_id: "d".into(), root: node(NodeKind::Root, "root", 0, None, vec![]), flags: vec![] };
        let json = export_json(&t);
        assert_eq!(import_json(&json).unwrap(), t);
        assert_eq!(export_markdown(&t), "\n");
    }

    #[test]
    fn markdown_rendering() {
        let mut root = node(NodeKind::Root, "root", 0, None, vec![body(0, ElementType::PageHeader, "Header")]);
        let mut report = node(NodeKind::Section, "s1", 1, Some("Report"), vec![body(2, ElementType::Text, "Body text.")]);
        let mut img = body(4, ElementType::Image, "");
        img.asset_ref = Some("images/fig1.png".into());
        let visual = node(NodeKind::Visual, "v4", 1, None, vec![img, body(5, ElementType::ImageCaption, "Figure 1: Setup")]);
        let deep = node(NodeKind::Section, "s6", 3, Some("Deep"), vec![]);
        report.children = vec![visual, deep];
        root.children = vec![report];
        let t = DocTree { doc_id: "d".into(), root, flags: vec![] };
        let md = export_markdown(&t);
        assert_eq!(
            md,
            "# Report\n\nBody text.\n\n![Figure 1: Setup](images/fig1.png)\n\nFigure 1: Setup\n\n### Deep\n"
        );
        assert!(!md.contains("Header"));
        let json = export_json(&t);
        assert_eq!(export_json(&import_json(&json).unwrap()), json);
    }
}
