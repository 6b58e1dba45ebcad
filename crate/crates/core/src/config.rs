//! Run configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.
//! Secrets never live in the file: the API key comes from `SEGPT_API_KEY`.
//!
//! ```toml
//! [backend]
//! kind = "openai"            # openai | simulated | scripted
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-3.5-turbo"
//!
//! [experiment]
//! per_dataset = 100
//! seed = 7
//! methods = ["se_gpt", "zero_shot"]
//!
//! [[datasets]]
//! id = "winogrande"
//! adapter = "winogrande"
//! path = "data/winogrande.jsonl"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    CachedSource, DocumentSource, FixtureCorpus, NoDocuments, Tokenizer, WikipediaSource, DEFAULT_TOKEN_LIMIT,
    WIKIPEDIA_API,
};
use crate::harness::{Dataset, DatasetKind, ExperimentSettings, Method, DEFAULT_DEMONSTRATIONS, DEFAULT_NEIGHBOURS, DEFAULT_WINDOW};
use crate::http::RetryPolicy;
use crate::llm::{GatewaySettings, LlmBackend, OpenAiBackend, ScriptedBackend, SimulatedBackend, Transcript};
use crate::memory::{MemoryConfig, DEFAULT_SKIP_THRESHOLD};
use crate::pipeline::{PipelineSettings, PracticeSettings};
use crate::retrieval::{Embedder, HashEmbedder, HttpEmbedder};

pub const API_KEY_ENV: &str = "SEGPT_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{file}: {path}: {message}")]
    Parse { file: String, path: String, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("backend `{0}` needs an API key in {API_KEY_ENV}")]
    MissingApiKey(&'static str),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Build(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Openai,
    #[default]
    Simulated,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub format_attempts: u32,
    pub vote_max_attempts: u32,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Transcript JSON for the scripted backend.
    pub transcript: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let g = GatewaySettings::default();
        Self {
            kind: BackendKind::default(),
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
            format_attempts: g.format_attempts,
            vote_max_attempts: g.vote_max_attempts,
            max_retries: RetryPolicy::default().max_attempts,
            timeout_secs: 120,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub seed: u64,
    pub base_url: String,
    pub model: String,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Hash,
            dim: 256,
            seed: 0,
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-ada-002".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Wikipedia,
    Fixture,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub kind: CorpusKind,
    pub api: String,
    pub fixture_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub token_limit: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            kind: CorpusKind::None,
            api: WIKIPEDIA_API.into(),
            fixture_dir: None,
            cache_dir: None,
            token_limit: DEFAULT_TOKEN_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    /// Snapshot used by `ask` and `inspect`.
    pub path: Option<PathBuf>,
    pub skip_threshold: u32,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            path: None,
            skip_threshold: DEFAULT_SKIP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub adapter: DatasetKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub per_dataset: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub rounds: u32,
    pub parallelism: usize,
    pub reset_memory: bool,
    pub demonstrations: usize,
    pub neighbours: usize,
    pub window: usize,
    /// Rounds of a repeated-induction study on the first question; 0 skips it.
    pub induction_rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            per_dataset: 0,
            seed: 0,
            methods: vec![Method::SeGpt, Method::ZeroShot],
            rounds: crate::harness::DEFAULT_ROUNDS,
            parallelism: 1,
            reset_memory: false,
            demonstrations: DEFAULT_DEMONSTRATIONS,
            neighbours: DEFAULT_NEIGHBOURS,
            window: DEFAULT_WINDOW,
            induction_rounds: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub embedding: EmbeddingConfig,
    pub corpus: CorpusConfig,
    pub memory: MemorySection,
    pub pipeline: PipelineSettings,
    pub experiment: ExperimentConfig,
    pub datasets: Vec<DatasetConfig>,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses TOML; errors name the offending field path.
    pub fn from_toml_str(text: &str, file: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            file: file.to_string(),
            path: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })
    }

    /// Reads, parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.backend.transcript.as_mut().map(fix);
        self.corpus.fixture_dir.as_mut().map(fix);
        self.corpus.cache_dir.as_mut().map(fix);
        self.memory.path.as_mut().map(fix);
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.backend;
        if !(0.0..=2.0).contains(&b.temperature) {
            return Err(invalid("backend.temperature", "must be within 0..=2"));
        }
        if b.format_attempts == 0 {
            return Err(invalid("backend.format_attempts", "must be at least 1"));
        }
        if b.vote_max_attempts < 2 {
            return Err(invalid("backend.vote_max_attempts", "must be at least 2"));
        }
        if b.max_retries == 0 {
            return Err(invalid("backend.max_retries", "must be at least 1"));
        }
        if b.kind == BackendKind::Scripted && b.transcript.is_none() {
            return Err(invalid("backend.transcript", "required by the scripted backend"));
        }
        if self.embedding.dim == 0 {
            return Err(invalid("embedding.dim", "must be positive"));
        }
        if self.corpus.kind == CorpusKind::Fixture && self.corpus.fixture_dir.is_none() {
            return Err(invalid("corpus.fixture_dir", "required by the fixture corpus"));
        }
        if self.corpus.token_limit == 0 {
            return Err(invalid("corpus.token_limit", "must be positive"));
        }
        if self.memory.skip_threshold == 0 {
            return Err(invalid("memory.skip_threshold", "must be at least 1"));
        }
        let p = &self.pipeline.practice;
        if p.target_examples == 0 || p.attempt_cap < p.target_examples {
            return Err(invalid(
                "pipeline.practice",
                "need target_examples >= 1 and attempt_cap >= target_examples",
            ));
        }
        let e = &self.experiment;
        if e.rounds == 0 {
            return Err(invalid("experiment.rounds", "must be at least 1"));
        }
        if e.window == 0 {
            return Err(invalid("experiment.window", "must be positive"));
        }
        if e.parallelism == 0 {
            return Err(invalid("experiment.parallelism", "must be at least 1"));
        }
        let mut ids: Vec<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("datasets", "dataset ids must be unique"));
        }
        Ok(())
    }

    /// Swaps networked components for local ones: the simulated model
    /// (a scripted one is kept), hash embeddings and the fixture corpus when
    /// one is configured.
    pub fn force_offline(&mut self) {
        if self.backend.kind == BackendKind::Openai {
            self.backend.kind = BackendKind::Simulated;
        }
        self.embedding.kind = EmbeddingKind::Hash;
        if self.corpus.kind == CorpusKind::Wikipedia {
            self.corpus.kind = if self.corpus.fixture_dir.is_some() {
                CorpusKind::Fixture
            } else {
                CorpusKind::None
            };
        }
    }

    /// Whether any configured component talks to a keyed API.
    pub fn needs_api_key(&self) -> bool {
        self.backend.kind == BackendKind::Openai || self.embedding.kind == EmbeddingKind::Http
    }

    /// Fails fast when a keyed backend has no key.
    pub fn check_api_key(&self, key: Option<&str>) -> Result<(), ConfigError> {
        if self.needs_api_key() && key.map_or(true, |k| k.trim().is_empty()) {
            let what = if self.backend.kind == BackendKind::Openai { "openai" } else { "http embeddings" };
            return Err(ConfigError::MissingApiKey(what));
        }
        Ok(())
    }

    pub fn gateway_settings(&self) -> GatewaySettings {
        GatewaySettings {
            temperature: self.backend.temperature,
            max_output_tokens: self.backend.max_output_tokens,
            format_attempts: self.backend.format_attempts,
            vote_max_attempts: self.backend.vote_max_attempts,
        }
    }

    pub fn memory_config(&self) -> MemoryConfig {
        MemoryConfig {
            dim: self.embedding.dim,
            skip_threshold: self.memory.skip_threshold,
        }
    }

    pub fn practice(&self) -> PracticeSettings {
        self.pipeline.practice
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        let e = &self.experiment;
        ExperimentSettings {
            rounds: e.rounds,
            parallelism: e.parallelism,
            reset_memory: e.reset_memory,
            demonstrations: e.demonstrations,
            neighbours: e.neighbours,
            window: e.window,
        }
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.backend.max_retries,
            ..RetryPolicy::default()
        }
    }

    pub fn build_backend(&self, api_key: Option<&str>) -> Result<Arc<dyn LlmBackend>, ConfigError> {
        self.check_api_key(api_key)?;
        Ok(match self.backend.kind {
            BackendKind::Simulated => Arc::new(SimulatedBackend::new()),
            BackendKind::Scripted => {
                let path = self.backend.transcript.as_ref().ok_or(invalid("backend.transcript", "missing"))?;
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let t: Transcript = serde_json::from_str(&text)
                    .map_err(|e| ConfigError::Build(format!("{}: {e}", path.display())))?;
                Arc::new(ScriptedBackend::from_transcript(t))
            }
            BackendKind::Openai => Arc::new(OpenAiBackend::new(
                &self.backend.base_url,
                &self.backend.model,
                api_key.unwrap_or_default().to_string(),
                self.retry(),
                Duration::from_secs(self.backend.timeout_secs),
            )),
        })
    }

    pub fn build_embedder(&self, api_key: Option<&str>) -> Arc<dyn Embedder> {
        match self.embedding.kind {
            EmbeddingKind::Hash => Arc::new(HashEmbedder::new(self.embedding.dim, self.embedding.seed)),
            EmbeddingKind::Http => Arc::new(HttpEmbedder::new(
                &self.embedding.base_url,
                &self.embedding.model,
                api_key.map(str::to_string),
                self.embedding.dim,
                self.retry(),
            )),
        }
    }

    pub fn build_corpus(
        &self,
        embedder: Arc<dyn Embedder>,
        tokenizer: Arc<dyn Tokenizer>,
    ) -> Result<Arc<dyn DocumentSource>, ConfigError> {
        let c = &self.corpus;
        let build = |e: crate::corpus::CorpusError| ConfigError::Build(format!("corpus: {e}"));
        let source: Arc<dyn DocumentSource> = match c.kind {
            CorpusKind::None => return Ok(Arc::new(NoDocuments)),
            CorpusKind::Fixture => {
                let dir = c.fixture_dir.as_ref().ok_or(invalid("corpus.fixture_dir", "missing"))?;
                return Ok(Arc::new(
                    FixtureCorpus::load(dir, embedder, tokenizer.as_ref(), c.token_limit).map_err(build)?,
                ));
            }
            CorpusKind::Wikipedia => Arc::new(
                WikipediaSource::new(&c.api, self.retry(), Duration::from_secs(self.backend.timeout_secs))
                    .with_tokenizer(tokenizer, c.token_limit),
            ),
        };
        Ok(match &c.cache_dir {
            Some(dir) => Arc::new(CachedSource::on_disk(source, dir).map_err(build)?),
            None => Arc::new(CachedSource::in_memory(source)),
        })
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>, crate::harness::HarnessError> {
        self.datasets
            .iter()
            .map(|d| Dataset::load(&d.id, d.adapter, &d.path))
            .collect()
    }
}
