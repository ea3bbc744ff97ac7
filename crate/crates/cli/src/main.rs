//! `docpost` command line: each pipeline stage as a subcommand.
//!
//! Configuration precedence is flag > environment > config file > default.
//! Failures print one JSON object `{"error": <code>, "message": ...}` on
//! stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use docpost_core::config::{ConfigError, ExportFormat, PipelineConfig, PredictorMode};
use docpost_core::export::{export_json, export_markdown, import_json};
use docpost_core::ingest::IngestError;
use docpost_core::pipeline::{cmd_eval, cmd_process, collect_json, Pipeline, PipelineError};

#[derive(Parser)]
#[command(name = "docpost", version, about = "Document-level structure recovery over OCR element sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map raw OCR output to a canonical document.
    Normalize {
        input: PathBuf,
        /// Write the canonical document here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Run the full pipeline and write artifacts per document.
    Process {
        /// Input files or directories of JSON files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Score prediction annotations against gold annotations.
    Eval {
        /// Prediction file or directory (`predictions.json` files are used).
        #[arg(long)]
        pred: PathBuf,
        /// Gold file or directory (`gold.json` files are used).
        #[arg(long)]
        gold: PathBuf,
        /// Write the JSON report here; the table goes to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render an exported tree JSON in another format.
    Export {
        tree: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the chunk plans a document would be processed with.
    InspectChunks {
        input: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorArg {
    Rules,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
    Both,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Markdown => ExportFormat::Markdown,
            FormatArg::Both => ExportFormat::Both,
        }
    }
}

/// Flags mirroring `PipelineConfig` fields.
#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile name or path to a profile JSON.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    /// Treat each document as a single chunk.
    #[arg(long)]
    no_chunking: bool,
    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    node_chunk_chars: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        c.apply_env(|k| std::env::var(k).ok());
        if let Some(p) = &self.profile {
            c.profile = p.clone();
        }
        if let Some(s) = self.stride {
            c.chunk.stride = s;
        }
        if let Some(t) = self.threshold {
            c.chunk.threshold = t;
        }
        if self.no_chunking {
            c.chunk.enabled = false;
        }
        if let Some(p) = self.predictor {
            c.predictor.mode = match p {
                PredictorArg::Rules => PredictorMode::Rules,
                PredictorArg::Remote => PredictorMode::Remote,
            };
        }
        if let Some(u) = &self.backend_url {
            c.predictor.remote.url = u.clone();
        }
        if let Some(n) = self.node_chunk_chars {
            c.tree.node_chunk_chars = n;
        }
        if let Some(f) = self.format {
            c.format = f.into();
        }
        if let Some(j) = self.jobs {
            c.jobs = j;
        }
        c.validate()?;
        Ok(c)
    }

    fn pipeline(&self) -> Result<Pipeline, PipelineError> {
        Pipeline::new(self.resolve()?)
    }
}

fn read_json(path: &Path) -> Result<Value, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text).map_err(IngestError::from)?)
}

fn emit(output: Option<&Path>, body: &str) -> Result<(), PipelineError> {
    match output {
        Some(path) => std::fs::write(path, body)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::FAILURE
}

fn run(command: Command) -> Result<ExitCode, PipelineError> {
    match command {
        Command::Normalize { input, output, opts } => {
            let pipeline = opts.pipeline()?;
            let (doc, report) = pipeline.load_document(&read_json(&input)?)?;
            if let Some(r) = report.filter(|r| r.unknown_count() > 0 || !r.dropped.is_empty()) {
                eprintln!("{}", json!({ "normalization": r }));
            }
            emit(output.as_deref(), &pretty(&json!(doc)))?;
        }
        Command::Process { inputs, out_dir, opts } => {
            let pipeline = opts.pipeline()?;
            let mut files = Vec::new();
            for input in &inputs {
                files.extend(collect_json(input, None)?);
            }
            let mut failed = 0;
            for (input, result) in cmd_process(&pipeline, &files, &out_dir) {
                match result {
                    Ok(dir) => println!("{}", json!({ "input": input, "output": dir })),
                    Err(e) => {
                        failed += 1;
                        let mut v = e.to_json();
                        v["input"] = json!(input);
                        eprintln!("{v}");
                    }
                }
            }
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Eval { pred, gold, report } => {
            let preds = collect_json(&pred, Some("predictions.json"))?;
            let golds = collect_json(&gold, Some("gold.json"))?;
            let r = cmd_eval(&preds, &golds)?;
            if let Some(path) = &report {
                emit(Some(path), &pretty(&json!(r)))?;
            }
            print!("{}", r.to_table());
        }
        Command::Export { tree, format, output } => {
            let path = tree.display().to_string();
            let text = std::fs::read_to_string(&tree).map_err(|source| PipelineError::Io { path, source })?;
            let tree = import_json(&text)
                .map_err(|e| PipelineError::InvalidDocument(format!("tree JSON: {e}")))?;
            let mut body = String::new();
            let format = ExportFormat::from(format);
            if format.json() {
                body.push_str(&export_json(&tree));
            }
            if format.markdown() {
                body.push_str(&export_markdown(&tree));
            }
            emit(output.as_deref(), &body)?;
        }
        Command::InspectChunks { input, opts } => {
            let pipeline = opts.pipeline()?;
            let (doc, _) = pipeline.load_document(&read_json(&input)?)?;
            let mut plans = pipeline.plan(&doc)?;
            // Deviations only exist after prediction; run it for the full picture.
            pipeline.predict(&doc, &mut plans)?;
            print!("{}", pretty(&json!(plans)));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run(cli.command).unwrap_or_else(|e| fail(&e))
}
