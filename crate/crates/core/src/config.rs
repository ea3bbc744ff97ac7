//! Pipeline configuration: TOML file, environment overrides, defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorCode;
use crate::filter::FilterConfig;
use crate::predict::RemoteConfig;
use crate::summary::DEFAULT_SUMMARY_CHARS;
use crate::tree::DEFAULT_NODE_CHUNK_CHARS;

pub const ENV_BACKEND_URL: &str = "DOCPOST_BACKEND_URL";
pub const ENV_SUMMARY_URL: &str = "DOCPOST_SUMMARY_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    NotFound(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ErrorCode for ConfigError {
    fn code(&self) -> &'static str {
        match self {
            ConfigError::NotFound(_) => "cli.ConfigNotFound",
            ConfigError::Invalid(_) => "cli.ConfigInvalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    Rules,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerMode {
    Extractive,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    Markdown,
    Both,
}

impl ExportFormat {
    pub fn json(self) -> bool {
        matches!(self, ExportFormat::Json | ExportFormat::Both)
    }

    pub fn markdown(self) -> bool {
        matches!(self, ExportFormat::Markdown | ExportFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkSettings {
    /// Off: every subtask sees the whole document at once.
    pub enabled: bool,
    pub stride: usize,
    pub threshold: usize,
}

impl Default for ChunkSettings {
    fn default() -> Self {
        ChunkSettings { enabled: true, stride: 8, threshold: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSettings {
    pub mode: PredictorMode,
    pub remote: RemoteConfig,
    /// Rule baseline: sentence-like titles longer than this become -1.
    pub demote_chars: usize,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        PredictorSettings { mode: PredictorMode::Rules, remote: RemoteConfig::default(), demote_chars: 80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSettings {
    pub node_chunk_chars: usize,
    pub summarizer: SummarizerMode,
    pub summary_remote: RemoteConfig,
    pub summary_chars: usize,
    pub summary_sentences: usize,
}

impl Default for TreeSettings {
    fn default() -> Self {
        TreeSettings {
            node_chunk_chars: DEFAULT_NODE_CHUNK_CHARS,
            summarizer: SummarizerMode::Extractive,
            summary_remote: RemoteConfig::default(),
            summary_chars: DEFAULT_SUMMARY_CHARS,
            summary_sentences: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Built-in profile name or path to a profile JSON.
    pub profile: String,
    pub chunk: ChunkSettings,
    pub filter: FilterConfig,
    pub predictor: PredictorSettings,
    pub tree: TreeSettings,
    pub format: ExportFormat,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            profile: "mineru".into(),
            chunk: ChunkSettings::default(),
            filter: FilterConfig::default(),
            predictor: PredictorSettings::default(),
            tree: TreeSettings::default(),
            format: ExportFormat::Both,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|_| ConfigError::NotFound(path.display().to_string()))?;
        PipelineConfig::from_toml(&text)
    }

    /// Apply environment overrides through `get` (normally `std::env::var`).
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_BACKEND_URL).filter(|u| !u.is_empty()) {
            self.predictor.remote.url = url;
        }
        if let Some(url) = get(ENV_SUMMARY_URL).filter(|u| !u.is_empty()) {
            self.tree.summary_remote.url = url;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let c = &self.chunk;
        if c.stride == 0 || c.threshold >= c.stride {
            return bad("chunk.stride must be >= 1 and chunk.threshold < chunk.stride");
        }
        if self.tree.node_chunk_chars == 0 {
            return bad("tree.node_chunk_chars must be >= 1");
        }
        if self.tree.summary_chars == 0 || self.tree.summary_sentences == 0 {
            return bad("tree.summary_chars and tree.summary_sentences must be >= 1");
        }
        if self.jobs == 0 || self.jobs > 256 {
            return bad("jobs must be in 1..=256");
        }
        if self.predictor.mode == PredictorMode::Remote && self.predictor.remote.url.is_empty() {
            return bad("remote predictor needs predictor.remote.url or DOCPOST_BACKEND_URL");
        }
        if self.tree.summarizer == SummarizerMode::Remote && self.tree.summary_remote.url.is_empty() {
            return bad("remote summarizer needs tree.summary_remote.url or DOCPOST_SUMMARY_URL");
        }
        crate::filter::Filters::new(self.filter.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
