//! Remote predictor: JSON requests to an inference service, strict
//! validation of the replies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    CellMergeJudgement, HierarchyPrediction, LevelItem, Pair, PairPrediction, PredictError, PredictResult,
    Predicted, Predictor,
};
use crate::element::ElementType;
use crate::error::Flag;
use crate::filter::{AssocItem, TablePairCandidate, TextPairCandidate, TitleItem};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection refused, timeout, non-2xx status.
    Unavailable(String),
    /// The service answered but the body is not JSON.
    BadBody(String),
}

/// Sends one request body and returns the parsed reply.
pub trait Transport: Send + Sync {
    fn post(&self, body: &Value) -> Result<Value, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&Value) -> Result<Value, TransportError> + Send + Sync,
{
    fn post(&self, body: &Value) -> Result<Value, TransportError> {
        self(body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_secs: u64,
    /// Environment variable holding a bearer token, if any.
    pub token_env: String,
    /// Extra attempts after a malformed reply.
    pub retries: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: String::new(),
            timeout_secs: 60,
            token_env: "DOCPOST_BACKEND_TOKEN".into(),
            retries: 1,
        }
    }
}

/// Blocking HTTP POST transport.
pub struct HttpTransport {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig) -> HttpTransport {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        HttpTransport { url: config.url.clone(), token, agent }
    }
}

impl Transport for HttpTransport {
    fn post(&self, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError::Unavailable(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| TransportError::BadBody(e.to_string()))
    }
}

pub struct RemotePredictor {
    transport: Box<dyn Transport>,
    retries: usize,
}

impl RemotePredictor {
    pub fn new(transport: Box<dyn Transport>, retries: usize) -> Self {
        RemotePredictor { transport, retries }
    }

    pub fn http(config: &RemoteConfig) -> Self {
        RemotePredictor::new(Box::new(HttpTransport::new(config)), config.retries)
    }

    fn call<T>(&self, body: Value, parse: impl Fn(&Value) -> Result<Predicted<T>, String>) -> PredictResult<T> {
        let task = body["task"].as_str().unwrap_or("?").to_string();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            let reply = match self.transport.post(&body) {
                Ok(v) => v,
                Err(TransportError::Unavailable(m)) => return Err(PredictError::BackendUnavailable(m)),
                Err(TransportError::BadBody(m)) => {
                    last = m;
                    continue;
                }
            };
            match parse(&unwrap_reply(reply)) {
                Ok(p) => return Ok(p),
                Err(m) => {
                    log::debug!("{task}: malformed reply on attempt {}: {m}", attempt + 1);
                    last = m;
                }
            }
        }
        Err(PredictError::MalformedResponse(format!("{task}: {last}")))
    }
}

/// Services backed by chat models sometimes return the JSON as a string,
/// possibly fenced; unwrap that once.
pub(crate) fn unwrap_reply(v: Value) -> Value {
    match v {
        Value::String(s) => {
            let t = s.trim();
            let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
            let t = t.strip_suffix("```").unwrap_or(t);
            serde_json::from_str(t.trim()).unwrap_or(Value::String(s))
        }
        other => other,
    }
}

fn block(idx: usize, etype: ElementType, content: &str, page: Option<usize>, bbox: Option<Value>) -> Value {
    let mut m = Map::new();
    m.insert("idx".into(), json!(idx));
    m.insert("type".into(), json!(etype.as_str()));
    m.insert("content".into(), json!(content));
    if let Some(p) = page {
        m.insert("page".into(), json!(p));
    }
    if let Some(b) = bbox {
        m.insert("bbox".into(), b);
    }
    Value::Object(m)
}

pub(crate) fn hierarchy_request(titles: &[TitleItem]) -> Value {
    let blocks: Vec<Value> = titles
        .iter()
        .map(|t| block(t.idx, ElementType::Title, &t.content, Some(t.page), Some(json!(t.bbox))))
        .collect();
    json!({ "task": "title_hierarchy", "blocks": blocks })
}

pub(crate) fn text_request(candidates: &[TextPairCandidate]) -> Value {
    // A block may be the target of one pair and the source of the next;
    // show its head and tail separated by an ellipsis.
    let mut parts: BTreeMap<usize, (Option<&str>, Option<&str>)> = BTreeMap::new();
    for c in candidates {
        parts.entry(c.src_idx).or_default().1 = Some(&c.src_tail);
        parts.entry(c.tgt_idx).or_default().0 = Some(&c.tgt_head);
    }
    let blocks: Vec<Value> = parts
        .iter()
        .map(|(&idx, (head, tail))| {
            let content = match (head, tail) {
                (Some(h), Some(t)) => format!("{h} ... {t}"),
                (Some(h), None) => format!("{h} ..."),
                (None, Some(t)) => format!("... {t}"),
                (None, None) => String::new(),
            };
            block(idx, ElementType::Text, &content, None, None)
        })
        .collect();
    let pairs: Vec<Value> = candidates.iter().map(|c| json!({"src": c.src_idx, "tgt": c.tgt_idx})).collect();
    json!({ "task": "text_truncation", "blocks": blocks, "pairs": pairs })
}

pub(crate) fn association_request(items: &[AssocItem]) -> Value {
    let blocks: Vec<Value> = items
        .iter()
        .map(|i| block(i.idx, i.etype, &i.content, Some(i.page), Some(json!(i.bbox))))
        .collect();
    json!({ "task": "association", "blocks": blocks })
}

fn rows_html(rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    for row in rows {
        s.push_str("<tr>");
        for cell in row {
            s.push_str("<td>");
            s.push_str(&cell.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;"));
            s.push_str("</td>");
        }
        s.push_str("</tr>");
    }
    s
}

pub(crate) fn table_request(pair: &TablePairCandidate) -> Value {
    json!({
        "task": "table_truncation",
        "blocks": [
            block(pair.upper_idx, ElementType::Table, "", None, None),
            block(pair.lower_idx, ElementType::Table, "", None, None),
        ],
        "upper_caption": pair.upper_caption.clone().unwrap_or_default(),
        "upper_row": rows_html(&pair.upper_rows),
        "lower_caption": pair.lower_caption.clone().unwrap_or_default(),
        "lower_row": rows_html(&pair.lower_rows),
        "columns": pair.col_counts.0,
    })
}

fn as_array(v: &Value) -> Result<&Vec<Value>, String> {
    v.as_array().ok_or_else(|| format!("expected a JSON array, got {}", kind(v)))
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn field_u(entry: &Value, name: &str) -> Result<usize, String> {
    entry
        .get(name)
        .and_then(Value::as_u64)
        .map(|n| n as usize)
        .ok_or_else(|| format!("entry {entry} lacks integer `{name}`"))
}

pub(crate) fn parse_hierarchy(v: &Value, titles: &[TitleItem]) -> Result<Predicted<HierarchyPrediction>, String> {
    let expected: BTreeSet<usize> = titles.iter().map(|t| t.idx).collect();
    let mut seen: HashMap<usize, i64> = HashMap::new();
    for entry in as_array(v)? {
        let idx = field_u(entry, "idx")?;
        let level = entry
            .get("level")
            .and_then(Value::as_i64)
            .ok_or_else(|| format!("entry {entry} lacks integer `level`"))?;
        if !expected.contains(&idx) {
            return Err(format!("unknown idx {idx}"));
        }
        if level != -1 && level < 1 {
            return Err(format!("invalid level {level} for idx {idx}"));
        }
        if seen.insert(idx, level).is_some() {
            return Err(format!("duplicate idx {idx}"));
        }
    }
    if let Some(missing) = expected.iter().find(|i| !seen.contains_key(i)) {
        return Err(format!("missing idx {missing}"));
    }
    let items = titles.iter().map(|t| LevelItem { idx: t.idx, level: seen[&t.idx] }).collect();
    Ok(Predicted::clean(HierarchyPrediction { items }))
}

fn parse_pair_list(v: &Value) -> Result<Vec<Pair>, String> {
    as_array(v)?
        .iter()
        .map(|e| Ok(Pair { src: field_u(e, "src")?, tgt: field_u(e, "tgt")? }))
        .collect()
}

pub(crate) fn parse_text(v: &Value, candidates: &[TextPairCandidate]) -> Result<Predicted<PairPrediction>, String> {
    let allowed: BTreeSet<Pair> = candidates.iter().map(|c| Pair { src: c.src_idx, tgt: c.tgt_idx }).collect();
    let mut kept = BTreeSet::new();
    let mut flags = Vec::new();
    for p in parse_pair_list(v)? {
        if allowed.contains(&p) {
            kept.insert(p);
        } else {
            flags.push(Flag::info("predict.PairNotCandidate", format!("({}, {})", p.src, p.tgt)));
        }
    }
    Ok(Predicted { value: PairPrediction { pairs: kept.into_iter().collect() }, flags })
}

pub(crate) fn parse_association(v: &Value, items: &[AssocItem]) -> Result<Predicted<PairPrediction>, String> {
    let types: HashMap<usize, ElementType> = items.iter().map(|i| (i.idx, i.etype)).collect();
    let mut by_src: BTreeMap<usize, usize> = BTreeMap::new();
    let mut flags = Vec::new();
    for p in parse_pair_list(v)? {
        let (Some(&s), Some(&t)) = (types.get(&p.src), types.get(&p.tgt)) else {
            flags.push(Flag::info("predict.UnknownIdx", format!("({}, {})", p.src, p.tgt)));
            continue;
        };
        if !ElementType::may_link(s, t) {
            flags.push(Flag::info("predict.TypeRuleViolation", format!("{s} {} -> {t} {}", p.src, p.tgt)));
            continue;
        }
        match by_src.get(&p.src) {
            None => {
                by_src.insert(p.src, p.tgt);
            }
            Some(&first) if first == p.tgt => {}
            Some(&first) => flags.push(Flag::info(
                "predict.DuplicateSource",
                format!("{} -> {} kept, -> {} dropped", p.src, first, p.tgt),
            )),
        }
    }
    let pairs = by_src.into_iter().map(|(src, tgt)| Pair { src, tgt }).collect();
    Ok(Predicted { value: PairPrediction { pairs }, flags })
}

pub(crate) fn parse_table(v: &Value, pair: &TablePairCandidate) -> Result<Predicted<CellMergeJudgement>, String> {
    let arr = as_array(v)?;
    let entry = match arr.as_slice() {
        [] => return Ok(Predicted::clean(CellMergeJudgement::default())),
        [one] => one,
        _ => return Err(format!("expected at most one judgement object, got {}", arr.len())),
    };
    let list = entry
        .get("judgement")
        .or_else(|| entry.get("judgment"))
        .and_then(Value::as_array)
        .ok_or_else(|| format!("entry {entry} lacks a `judgement` list"))?;
    let columns = list
        .iter()
        .map(|q| match q.as_u64() {
            Some(0) => Ok(0u8),
            Some(1) => Ok(1u8),
            _ => Err(format!("judgement value {q} is not 0 or 1")),
        })
        .collect::<Result<Vec<u8>, String>>()?;
    if columns.len() != pair.col_counts.0 {
        let flag = Flag::warning(
            "predict.JudgementLength",
            format!(
                "tables {}/{}: {} values for {} columns; treated as not a continuation",
                pair.upper_idx,
                pair.lower_idx,
                columns.len(),
                pair.col_counts.0
            ),
        );
        return Ok(Predicted { value: CellMergeJudgement::default(), flags: vec![flag] });
    }
    Ok(Predicted::clean(CellMergeJudgement { columns }))
}

impl Predictor for RemotePredictor {
    fn name(&self) -> &str {
        "remote"
    }

    fn title_hierarchy(&self, titles: &[TitleItem]) -> PredictResult<HierarchyPrediction> {
        if titles.is_empty() {
            return Ok(Predicted::clean(HierarchyPrediction::default()));
        }
        self.call(hierarchy_request(titles), |v| parse_hierarchy(v, titles))
    }

    fn text_truncation(&self, candidates: &[TextPairCandidate]) -> PredictResult<PairPrediction> {
        if candidates.is_empty() {
            return Ok(Predicted::clean(PairPrediction::default()));
        }
        self.call(text_request(candidates), |v| parse_text(v, candidates))
    }

    fn association(&self, items: &[AssocItem]) -> PredictResult<PairPrediction> {
        if items.is_empty() {
            return Ok(Predicted::clean(PairPrediction::default()));
        }
        self.call(association_request(items), |v| parse_association(v, items))
    }

    fn table_truncation(&self, pair: &TablePairCandidate) -> PredictResult<CellMergeJudgement> {
        self.call(table_request(pair), |v| parse_table(v, pair))
    }
}
