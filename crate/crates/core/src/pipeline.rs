//! End-to-end processing: ingest, filter, chunked prediction, apply, tree,
//! export; plus batch evaluation against gold annotations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotations::{AnnotationError, Annotations, HierarchyEntry, TableJudgement};
use crate::apply::{apply, ApplyError, ResolvedDocument};
use crate::chunk::{
    merge_union, plan_chunks, synchronize_hierarchy, ChunkError, ChunkLevels, ChunkPlan, ChunkPlanConfig,
    ChunkPrediction, PageProfile, PageRange, PairUnion,
};
use crate::config::{ConfigError, PipelineConfig, PredictorMode, SummarizerMode};
use crate::element::{CanonicalDocument, ElementType};
use crate::error::{ErrorCode, Flag, Severity};
use crate::eval::{evaluate_document, summarize, EvalError, EvalReport};
use crate::export::{export_json, export_markdown};
use crate::filter::{
    filter_association_candidates, filter_table_truncation_candidates, filter_text_truncation_candidates,
    filter_titles, FilterError, Filters,
};
use crate::ingest::{normalize_elements, validate_document, IngestError, NormalizationReport, Profile};
use crate::par::parallel_map;
use crate::predict::{
    HttpTransport, Pair, PredictError, Predicted, Predictor, RemotePredictor, RulePredictor, WithFallback,
};
use crate::summary::{summarize_nodes, Extractive, RemoteSummarizer, Summarizer};
use crate::tree::{build_tree, chunk_nodes, DocTree};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid canonical document: {0}")]
    InvalidDocument(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ErrorCode for PipelineError {
    fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(e) => e.code(),
            PipelineError::Ingest(e) => e.code(),
            PipelineError::Filter(e) => e.code(),
            PipelineError::Chunk(e) => e.code(),
            PipelineError::Predict(e) => e.code(),
            PipelineError::Apply(e) => e.code(),
            PipelineError::Annotation(e) => e.code(),
            PipelineError::Eval(e) => e.code(),
            PipelineError::InvalidDocument(_) => "ingest.InvalidDocument",
            PipelineError::Io { .. } => "cli.Io",
        }
    }
}

impl PipelineError {
    pub fn to_json(&self) -> Value {
        serde_json::json!({ "error": self.code(), "message": self.to_string() })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

/// Chunk plans per chunked subtask, keyed by the element type whose page
/// density drives the boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlans {
    pub chunking: bool,
    pub stride: usize,
    pub threshold: usize,
    pub title: ChunkPlan,
    pub text: ChunkPlan,
    pub image: ChunkPlan,
    /// Level shift applied to each hierarchy chunk.
    pub deviations: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub doc_id: String,
    pub source_schema: String,
    pub predictor: String,
    pub summarizer: String,
    pub chunking: bool,
    pub elements_in: usize,
    pub elements_out: usize,
    pub titles: usize,
    pub text_candidates: usize,
    pub association_items: usize,
    pub table_candidates: usize,
    pub text_merges: usize,
    pub table_merges: usize,
    pub warnings: usize,
    pub flags: Vec<Flag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationReport>,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub document: CanonicalDocument,
    pub normalization: Option<NormalizationReport>,
    pub plans: ChunkPlans,
    pub predictions: Annotations,
    pub resolved: ResolvedDocument,
    pub tree: DocTree,
    pub report: RunReport,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    filters: Filters,
    predictor: Box<dyn Predictor>,
    summarizer: Box<dyn Summarizer>,
}

impl Pipeline {
    /// Build predictor and summarizer from the configuration.
    pub fn new(config: PipelineConfig) -> Result<Pipeline, PipelineError> {
        config.validate()?;
        let filters = Filters::new(config.filter.clone())?;
        let rules = RulePredictor { filters: filters.clone(), demote_chars: config.predictor.demote_chars };
        let predictor: Box<dyn Predictor> = match config.predictor.mode {
            PredictorMode::Rules => Box::new(rules),
            PredictorMode::Remote => Box::new(WithFallback {
                primary: RemotePredictor::http(&config.predictor.remote),
                fallback: rules,
            }),
        };
        let summarizer: Box<dyn Summarizer> = match config.tree.summarizer {
            SummarizerMode::Extractive => Box::new(extractive(&config)),
            SummarizerMode::Remote => Box::new(RemoteSummarizer::new(
                Box::new(HttpTransport::new(&config.tree.summary_remote)),
                config.tree.summary_remote.retries,
            )),
        };
        Ok(Pipeline { config, filters, predictor, summarizer })
    }

    /// Use a caller-supplied predictor (for instance a mocked backend).
    pub fn with_predictor(config: PipelineConfig, predictor: Box<dyn Predictor>) -> Result<Pipeline, PipelineError> {
        let mut p = Pipeline::new(PipelineConfig {
            predictor: crate::config::PredictorSettings { mode: PredictorMode::Rules, ..config.predictor.clone() },
            ..config.clone()
        })?;
        p.config = config;
        p.predictor = predictor;
        Ok(p)
    }

    pub fn filters(&self) -> &Filters {
        &self.filters
    }

    /// Accept either a canonical document or raw OCR output for the
    /// configured profile.
    pub fn load_document(&self, raw: &Value) -> Result<(CanonicalDocument, Option<NormalizationReport>), PipelineError> {
        let canonical = raw.get("elements").is_some() && raw.get("source_schema").is_some();
        if canonical {
            let doc: CanonicalDocument =
                serde_json::from_value(raw.clone()).map_err(|e| PipelineError::InvalidDocument(e.to_string()))?;
            let report = validate_document(&doc);
            if let Some(v) = report.violations.first() {
                return Err(PipelineError::InvalidDocument(format!(
                    "{} violation(s), first at idx {}: {:?}",
                    report.violations.len(),
                    v.idx,
                    v.kind
                )));
            }
            return Ok((doc, None));
        }
        let profile = Profile::resolve(&self.config.profile)?;
        let n = normalize_elements(raw, &profile)?;
        Ok((n.document, Some(n.report)))
    }

    pub fn plan(&self, doc: &CanonicalDocument) -> Result<ChunkPlans, PipelineError> {
        let c = &self.config.chunk;
        let p_max = doc.page_count.saturating_sub(1);
        let plan = |etype: ElementType| -> Result<ChunkPlan, PipelineError> {
            if !c.enabled {
                return Ok(ChunkPlan::single(p_max));
            }
            let cfg = ChunkPlanConfig::new(c.stride, c.threshold, etype)?;
            Ok(plan_chunks(&PageProfile { counts: doc.page_counts(etype) }, &cfg)?)
        };
        Ok(ChunkPlans {
            chunking: c.enabled,
            stride: c.stride,
            threshold: c.threshold,
            title: plan(ElementType::Title)?,
            text: plan(ElementType::Text)?,
            image: plan(ElementType::Image)?,
            deviations: Vec::new(),
        })
    }

    /// Run the four subtasks and gather their answers into annotations.
    pub fn predict(
        &self,
        doc: &CanonicalDocument,
        plans: &mut ChunkPlans,
    ) -> Result<(Annotations, Vec<Flag>, [usize; 4]), PipelineError> {
        let jobs = self.config.jobs;
        let p = self.predictor.as_ref();
        let mut flags = Vec::new();
        let page_of = |idx: usize| doc.element(idx).map_or(0, |e| e.page);

        // Title hierarchy, synchronized across chunks.
        let titles = filter_titles(doc).items;
        let per_chunk: Vec<_> = parallel_map(&plans.title.chunks, jobs, |r: &PageRange| {
            let items: Vec<_> = titles.iter().filter(|t| r.contains(t.page)).cloned().collect();
            p.title_hierarchy(&items)
        });
        let mut levels_by_chunk = Vec::new();
        for (i, r) in per_chunk.into_iter().enumerate() {
            let h = keep(r?, &mut flags);
            levels_by_chunk.push(ChunkLevels {
                chunk_index: i,
                payload: h.items.iter().map(|l| (l.idx, l.level)).collect(),
            });
        }
        let sync = synchronize_hierarchy(&levels_by_chunk);
        for c in &sync.empty_overlaps {
            flags.push(Flag::info("chunk.EmptyOverlap", format!("title chunk {c} shares no titles with chunk {}", c - 1)));
        }
        plans.deviations = sync.deviations.clone();
        let hierarchy: Vec<HierarchyEntry> = titles
            .iter()
            .filter_map(|t| {
                let level = *sync.levels.get(&t.idx)?;
                Some(HierarchyEntry { idx: t.idx, level, content: Some(t.content.clone()) })
            })
            .collect();

        // Text truncation. A candidate goes to every chunk holding both of
        // its pages, or to the first chunk holding its source page.
        let text_cands = filter_text_truncation_candidates(doc, &self.filters);
        let chunk_cands: Vec<Vec<_>> = plans
            .text
            .chunks
            .iter()
            .enumerate()
            .map(|(i, r)| {
                text_cands
                    .iter()
                    .filter(|c| {
                        let (sp, tp) = (page_of(c.src_idx), page_of(c.tgt_idx));
                        (r.contains(sp) && r.contains(tp))
                            || (!plans.text.chunks.iter().any(|o| o.contains(sp) && o.contains(tp))
                                && plans.text.chunks.iter().position(|o| o.contains(sp)) == Some(i))
                    })
                    .cloned()
                    .collect()
            })
            .collect();
        let text_results = parallel_map(&chunk_cands, jobs, |c: &Vec<_>| p.text_truncation(c));
        let mut text_chunks = Vec::new();
        for (i, r) in text_results.into_iter().enumerate() {
            let v = keep(r?, &mut flags);
            text_chunks.push(ChunkPrediction { chunk_index: i, payload: v.pairs.iter().map(|x| (x.src, x.tgt)).collect() });
        }
        let (text_pairs, _) = merge_union(text_chunks, PairUnion::Set);

        // Association.
        let assoc = filter_association_candidates(doc).items;
        let assoc_results = parallel_map(&plans.image.chunks, jobs, |r: &PageRange| {
            let items: Vec<_> = assoc.iter().filter(|a| r.contains(a.page)).cloned().collect();
            p.association(&items)
        });
        let mut assoc_chunks = Vec::new();
        for (i, r) in assoc_results.into_iter().enumerate() {
            let v = keep(r?, &mut flags);
            assoc_chunks.push(ChunkPrediction { chunk_index: i, payload: v.pairs.iter().map(|x| (x.src, x.tgt)).collect() });
        }
        let (links, conflicts) = merge_union(assoc_chunks, PairUnion::UniqueSource);
        for c in conflicts {
            flags.push(Flag::info(
                "chunk.LinkConflict",
                format!("{} -> {} kept, -> {} from chunk {} dropped", c.key, c.kept, c.rejected, c.chunk_index),
            ));
        }

        // Table truncation, one request per boundary pair.
        let tables = filter_table_truncation_candidates(doc, &self.filters);
        for s in &tables.skipped {
            flags.push(Flag::info("filtering.TableSkipped", format!("({}, {}): {}", s.upper_idx, s.lower_idx, s.reason)));
        }
        let table_results = parallel_map(&tables.candidates, jobs, |c| p.table_truncation(c));
        let mut judgements = Vec::new();
        for (c, r) in tables.candidates.iter().zip(table_results) {
            let v = keep(r?, &mut flags);
            judgements.push(TableJudgement { upper: c.upper_idx, lower: c.lower_idx, judgement: v.columns });
        }

        let mut ann = Annotations::empty(&doc.doc_id);
        ann.hierarchy = hierarchy;
        ann.text_truncation = text_pairs.into_iter().map(|(src, tgt)| Pair { src, tgt }).collect();
        ann.association = links.into_iter().map(|(src, tgt)| Pair { src, tgt }).collect();
        ann.table_truncation = judgements;
        let counts = [titles.len(), text_cands.len(), assoc.len(), tables.candidates.len()];
        Ok((ann, flags, counts))
    }

    pub fn process(&self, raw: &Value) -> Result<ProcessOutput, PipelineError> {
        let (document, normalization) = self.load_document(raw)?;
        let mut plans = self.plan(&document)?;
        let (predictions, mut flags, counts) = self.predict(&document, &mut plans)?;
        let resolved = apply(&document, &predictions)?;
        flags.extend(resolved.flags.iter().cloned());
        let mut tree = build_tree(&resolved);
        chunk_nodes(&mut tree, self.config.tree.node_chunk_chars);
        summarize_nodes(&mut tree, self.summarizer.as_ref(), self.config.tree.summary_chars, self.config.jobs);
        flags.extend(tree.flags.iter().cloned());
        let report = RunReport {
            doc_id: document.doc_id.clone(),
            source_schema: document.source_schema.clone(),
            predictor: self.predictor.name().to_string(),
            summarizer: self.summarizer.name().to_string(),
            chunking: plans.chunking,
            elements_in: document.elements.len(),
            elements_out: resolved.elements.len(),
            titles: counts[0],
            text_candidates: counts[1],
            association_items: counts[2],
            table_candidates: counts[3],
            text_merges: resolved.merge_log.text.len(),
            table_merges: resolved.merge_log.tables.len(),
            warnings: flags.iter().filter(|f| f.severity == Severity::Warning).count(),
            flags,
            normalization: normalization.clone(),
        };
        Ok(ProcessOutput { document, normalization, plans, predictions, resolved, tree, report })
    }

    pub fn process_file(&self, path: &Path) -> Result<ProcessOutput, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let raw: Value = serde_json::from_str(&text).map_err(IngestError::from)?;
        self.process(&raw)
    }
}

fn keep<T>(pred: Predicted<T>, flags: &mut Vec<Flag>) -> T {
    flags.extend(pred.flags);
    pred.value
}

fn extractive(config: &PipelineConfig) -> Extractive {
    Extractive {
        sentences: config.tree.summary_sentences,
        char_cap: config.tree.summary_chars,
        punctuation: crate::text::Punctuation {
            terminators: config.filter.terminators.clone(),
            closers: config.filter.closers.clone(),
        },
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// File-system safe directory name for a document id.
pub fn doc_dir_name(doc_id: &str) -> String {
    let s: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "doc".to_string()
    } else {
        s
    }
}

/// Rendered artifacts by file name.
pub fn render_artifacts(out: &ProcessOutput, config: &PipelineConfig) -> BTreeMap<&'static str, String> {
    let mut files = BTreeMap::new();
    if config.format.json() {
        files.insert("tree.json", export_json(&out.tree));
    }
    if config.format.markdown() {
        files.insert("tree.md", export_markdown(&out.tree));
    }
    files.insert("merge_log.json", pretty(&out.resolved.merge_log));
    files.insert("chunk_plan.json", pretty(&out.plans));
    files.insert("report.json", pretty(&out.report));
    files.insert("predictions.json", pretty(&out.predictions));
    files
}

pub fn write_artifacts(out: &ProcessOutput, config: &PipelineConfig, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    let dir = out_dir.join(doc_dir_name(&out.document.doc_id));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, body) in render_artifacts(out, config) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(dir)
}

/// Process every input independently; one failure does not stop the batch.
pub fn cmd_process(
    pipeline: &Pipeline,
    inputs: &[PathBuf],
    out_dir: &Path,
) -> Vec<(PathBuf, Result<PathBuf, PipelineError>)> {
    let results = parallel_map(inputs, pipeline.config.jobs, |path| {
        pipeline.process_file(path).and_then(|out| write_artifacts(&out, &pipeline.config, out_dir))
    });
    inputs.iter().cloned().zip(results).collect()
}

/// JSON files under `path`; inside directories only those named `name`
/// when given.
pub fn collect_json(path: &Path, name: Option<&str>) -> Result<Vec<PathBuf>, PipelineError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = entry.map_err(io_err(&dir))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if match name {
                Some(n) => p.file_name().is_some_and(|f| f == n),
                None => p.extension().is_some_and(|e| e == "json"),
            } {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Score prediction annotation files against gold files, matched by doc id.
pub fn cmd_eval(pred_files: &[PathBuf], gold_files: &[PathBuf]) -> Result<EvalReport, PipelineError> {
    let load = |files: &[PathBuf]| -> Result<BTreeMap<String, Annotations>, PipelineError> {
        let mut m = BTreeMap::new();
        for f in files {
            let a = Annotations::load(f).map_err(|e| match e {
                AnnotationError::Io { .. } => PipelineError::from(e),
                other => EvalError::SchemaMismatch(format!("{}: {other}", f.display())).into(),
            })?;
            if m.insert(a.doc_id.clone(), a).is_some() {
                return Err(EvalError::SchemaMismatch(format!("duplicate doc_id in {}", f.display())).into());
            }
        }
        Ok(m)
    };
    let (pred, gold) = (load(pred_files)?, load(gold_files)?);
    let mut docs = Vec::new();
    for (id, g) in &gold {
        let p = pred
            .get(id)
            .ok_or_else(|| EvalError::SchemaMismatch(format!("no prediction for document `{id}`")))?;
        docs.push(evaluate_document(p, g)?);
    }
    Ok(summarize(docs))
}
