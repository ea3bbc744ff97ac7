//! Node summaries: an extractive fallback and a remote summarizer.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Flag;
use crate::par::parallel_map;
use crate::predict::{unwrap_reply, PredictError, Transport, TransportError};
use crate::text::Punctuation;
use crate::tree::{DocNode, DocTree, NodeKind};

pub const DEFAULT_SUMMARY_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryInput {
    pub node_id: String,
    pub title_path: Vec<String>,
    pub paragraphs: Vec<String>,
}

pub trait Summarizer: Send + Sync {
    fn name(&self) -> &str;
    fn summarize(&self, input: &SummaryInput) -> Result<String, PredictError>;
}

/// Lead sentences of the node text, capped in characters.
#[derive(Debug, Clone)]
pub struct Extractive {
    pub sentences: usize,
    pub char_cap: usize,
    pub punctuation: Punctuation,
}

impl Default for Extractive {
    fn default() -> Self {
        Extractive { sentences: 2, char_cap: DEFAULT_SUMMARY_CHARS, punctuation: Punctuation::default() }
    }
}

impl Summarizer for Extractive {
    fn name(&self) -> &str {
        "extractive"
    }

    fn summarize(&self, input: &SummaryInput) -> Result<String, PredictError> {
        let text = input.paragraphs.join(" ");
        let lead = self.punctuation.sentences(&text).into_iter().take(self.sentences).collect::<Vec<_>>().join(" ");
        Ok(truncate_chars(&lead, self.char_cap))
    }
}

pub struct RemoteSummarizer {
    transport: Box<dyn Transport>,
    retries: usize,
}

impl RemoteSummarizer {
    pub fn new(transport: Box<dyn Transport>, retries: usize) -> Self {
        RemoteSummarizer { transport, retries }
    }
}

impl Summarizer for RemoteSummarizer {
    fn name(&self) -> &str {
        "remote"
    }

    fn summarize(&self, input: &SummaryInput) -> Result<String, PredictError> {
        let body = json!({
            "node_id": input.node_id,
            "title_path": input.title_path,
            "paragraphs": input.paragraphs,
        });
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.transport.post(&body) {
                Err(TransportError::Unavailable(m)) => return Err(PredictError::BackendUnavailable(m)),
                Err(TransportError::BadBody(m)) => last = m,
                Ok(v) => match unwrap_reply(v).get("summary").and_then(Value::as_str) {
                    Some(s) => return Ok(s.to_string()),
                    None => last = "reply lacks a string `summary`".into(),
                },
            }
        }
        Err(PredictError::MalformedResponse(format!("summary for {}: {last}", input.node_id)))
    }
}

pub fn truncate_chars(s: &str, cap: usize) -> String {
    s.chars().take(cap).collect()
}

fn summary_input(node: &DocNode) -> SummaryInput {
    let own = node.body.iter();
    // A section whose text moved into subnodes is summarized from them.
    let subs = node.children.iter().filter(|c| c.kind == NodeKind::Subnode).flat_map(|c| c.body.iter());
    let paragraphs = own
        .chain(subs)
        .filter(|b| !b.etype.is_independent() && !b.etype.is_visual())
        .map(|b| b.content.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    SummaryInput { node_id: node.node_id.clone(), title_path: node.title_path.clone(), paragraphs }
}

/// Text used when a node has nothing to summarize.
fn degenerate_summary(node: &DocNode) -> String {
    node.title_text
        .clone()
        .or_else(|| node.body.first().map(|b| b.etype.as_str().to_string()))
        .unwrap_or_default()
}

/// Attach a summary to every non-root node. Failed backend calls fall back
/// to the extractive summarizer and leave a flag. Calls run on up to `jobs`
/// threads; the result does not depend on completion order.
pub fn summarize_nodes(tree: &mut DocTree, sz: &dyn Summarizer, char_cap: usize, jobs: usize) {
    let inputs: Vec<(SummaryInput, String)> = tree
        .nodes()
        .into_iter()
        .filter(|n| n.kind != NodeKind::Root)
        .map(|n| (summary_input(n), degenerate_summary(n)))
        .collect();
    let fallback = Extractive { char_cap, ..Extractive::default() };
    let results: Vec<(String, Option<Flag>)> = parallel_map(&inputs, jobs, |(input, degenerate)| {
        if input.paragraphs.is_empty() {
            return (truncate_chars(degenerate, char_cap), None);
        }
        match sz.summarize(input) {
            Ok(s) => (truncate_chars(&s, char_cap), None),
            Err(e) => {
                let s = fallback.summarize(input).unwrap_or_default();
                (s, Some(Flag::warning("tree.SummaryFallback", format!("{}: {e}", input.node_id))))
            }
        }
    });
    let by_id: std::collections::HashMap<String, String> = inputs
        .iter()
        .zip(&results)
        .map(|((i, _), (s, _))| (i.node_id.clone(), s.clone()))
        .collect();
    tree.flags.extend(results.into_iter().filter_map(|(_, f)| f));
    tree.nodes_mut(|n| {
        if let Some(s) = by_id.get(&n.node_id) {
            n.summary = Some(s.clone());
        }
    });
}
