//! Pipeline configuration: provider bindings per stage, retrieval backend,
//! templates, policies. Loaded from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::provider::{
    CleanupOptions, FailingGenerator, Generator, HttpGenerator, HttpProviderConfig,
    HttpRetrievalConfig, HttpRetriever, MockGenerator, MockRetriever, Retriever, RetryPolicy,
    StageTag,
};

use super::template::TemplateSet;
use super::PipelineError;

/// Which question becomes the training prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    #[default]
    Enhanced,
    Raw,
}

/// What to do with a record when retrieval comes back empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmptyRetrievalPolicy {
    /// Drop the record from later stages; preferred samples are grounded in
    /// retrieved content, so an ungrounded record is not worth keeping.
    #[default]
    SkipRecord,
    /// Keep going with empty knowledge and the retrieval-empty flag set.
    ProceedWithoutRag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Http,
}

/// One provider binding: backend choice plus generation and retry knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderBinding {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
    /// Fault injection (mock only): fail requests whose inputs contain any
    /// of these strings.
    pub fail_if_input_contains: Vec<String>,
    /// Restrict injected faults to one stage.
    pub fail_stage: Option<StageTag>,
}

impl Default for ProviderBinding {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            base_url: String::new(),
            model: String::new(),
            api_key_env: "PROVIDER_API_KEY".to_string(),
            temperature: 0.3,
            max_tokens: 2048,
            max_attempts: 4,
            backoff_base_ms: 1000,
            timeout_ms: 60_000,
            fail_if_input_contains: Vec::new(),
            fail_stage: None,
        }
    }
}

impl ProviderBinding {
    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay: Duration::from_millis(self.backoff_base_ms),
            ..RetryPolicy::default()
        }
    }

    fn build(&self, concurrency: usize) -> Result<Arc<dyn Generator>, PipelineError> {
        let base: Arc<dyn Generator> = match self.kind {
            ProviderKind::Mock => Arc::new(MockGenerator),
            ProviderKind::Http => {
                if self.base_url.is_empty() {
                    return Err(PipelineError::Config(
                        "http provider requires base_url".into(),
                    ));
                }
                Arc::new(
                    HttpGenerator::new(HttpProviderConfig {
                        base_url: self.base_url.clone(),
                        model: self.model.clone(),
                        api_key_env: self.api_key_env.clone(),
                        timeout: Duration::from_millis(self.timeout_ms),
                        retry: self.retry(),
                        max_concurrency: Some(concurrency),
                    })
                    .map_err(|err| PipelineError::Config(err.to_string()))?,
                )
            }
        };
        if self.fail_if_input_contains.is_empty() {
            Ok(base)
        } else {
            Ok(Arc::new(FailingGenerator::new(
                base,
                self.fail_if_input_contains.clone(),
                self.fail_stage,
            )))
        }
    }
}

/// Per-stage provider bindings with an optional shared default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub default: Option<ProviderBinding>,
    pub enhance: Option<ProviderBinding>,
    pub reject: Option<ProviderBinding>,
    pub cot: Option<ProviderBinding>,
    pub answer: Option<ProviderBinding>,
    pub judge: Option<ProviderBinding>,
}

impl ProvidersConfig {
    pub fn binding_for(&self, stage: StageTag) -> Result<&ProviderBinding, PipelineError> {
        let specific = match stage {
            StageTag::Enhance => &self.enhance,
            StageTag::Reject => &self.reject,
            StageTag::Cot => &self.cot,
            StageTag::Answer => &self.answer,
            StageTag::Judge => &self.judge,
        };
        specific
            .as_ref()
            .or(self.default.as_ref())
            .ok_or_else(|| {
                PipelineError::Config(format!(
                    "no provider bound for stage {stage} and no default provider set"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalBinding {
    pub kind: ProviderKind,
    pub base_url: String,
    pub api_key_env: String,
    pub top_k: usize,
    pub min_passage_chars: usize,
    pub max_merged_chars: usize,
    pub separator: String,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetrievalBinding {
    fn default() -> Self {
        let cleanup = CleanupOptions::default();
        Self {
            kind: ProviderKind::Mock,
            base_url: String::new(),
            api_key_env: "RETRIEVAL_API_KEY".to_string(),
            top_k: 5,
            min_passage_chars: cleanup.min_passage_chars,
            max_merged_chars: cleanup.max_merged_chars,
            separator: cleanup.separator,
            max_attempts: 4,
            backoff_base_ms: 1000,
            timeout_ms: 60_000,
        }
    }
}

impl RetrievalBinding {
    fn build(&self) -> Result<Arc<dyn Retriever>, PipelineError> {
        match self.kind {
            ProviderKind::Mock => Ok(Arc::new(MockRetriever)),
            ProviderKind::Http => {
                if self.base_url.is_empty() {
                    return Err(PipelineError::Config(
                        "http retrieval requires base_url".into(),
                    ));
                }
                Ok(Arc::new(
                    HttpRetriever::new(HttpRetrievalConfig {
                        base_url: self.base_url.clone(),
                        api_key_env: self.api_key_env.clone(),
                        top_k: self.top_k,
                        timeout: Duration::from_millis(self.timeout_ms),
                        retry: RetryPolicy {
                            max_attempts: self.max_attempts.max(1),
                            base_delay: Duration::from_millis(self.backoff_base_ms),
                            ..RetryPolicy::default()
                        },
                        cleanup: CleanupOptions {
                            min_passage_chars: self.min_passage_chars,
                            max_merged_chars: self.max_merged_chars,
                            separator: self.separator.clone(),
                        },
                    })
                    .map_err(|err| PipelineError::Config(err.to_string()))?,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Appended to every training prompt to switch the target model into
    /// thinking mode; model-family-specific.
    pub think_directive: String,
    pub prompt_source: PromptSource,
    pub empty_retrieval: EmptyRetrievalPolicy,
    /// Records processed concurrently within a stage.
    pub concurrency: usize,
    /// Optional path to a templates TOML; built-in templates otherwise.
    pub templates: Option<PathBuf>,
    pub providers: ProvidersConfig,
    pub retrieval: RetrievalBinding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            think_directive: crate::data::DEFAULT_THINK_DIRECTIVE.to_string(),
            prompt_source: PromptSource::default(),
            empty_retrieval: EmptyRetrievalPolicy::default(),
            concurrency: 4,
            templates: None,
            providers: ProvidersConfig {
                default: Some(ProviderBinding::default()),
                ..ProvidersConfig::default()
            },
            retrieval: RetrievalBinding::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|err| PipelineError::Config(err.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file, resolving a relative `templates` path against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|err| PipelineError::Config(format!("{}: {err}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(templates) = &config.templates {
            if templates.is_relative() {
                if let Some(dir) = path.parent() {
                    config.templates = Some(dir.join(templates));
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.concurrency < 1 {
            return Err(PipelineError::Config("concurrency must be >= 1".into()));
        }
        // Every generation stage must resolve to a binding.
        for stage in [StageTag::Enhance, StageTag::Reject, StageTag::Cot, StageTag::Answer] {
            self.providers.binding_for(stage)?;
        }
        Ok(())
    }

    pub fn load_templates(&self) -> Result<TemplateSet, PipelineError> {
        match &self.templates {
            Some(path) => TemplateSet::load(path),
            None => Ok(TemplateSet::builtin()),
        }
    }

    /// Forces every provider binding to the given kind (CLI override).
    pub fn override_provider_kind(&mut self, kind: ProviderKind) {
        let bindings = [
            &mut self.providers.default,
            &mut self.providers.enhance,
            &mut self.providers.reject,
            &mut self.providers.cot,
            &mut self.providers.answer,
            &mut self.providers.judge,
        ];
        for binding in bindings {
            if let Some(binding) = binding {
                binding.kind = kind;
            }
        }
        self.retrieval.kind = kind;
    }

    pub fn build_generators(&self) -> Result<StageGenerators, PipelineError> {
        let build = |stage| -> Result<(Arc<dyn Generator>, GenParams), PipelineError> {
            let binding = self.providers.binding_for(stage)?;
            Ok((
                binding.build(self.concurrency)?,
                GenParams {
                    temperature: binding.temperature,
                    max_tokens: binding.max_tokens,
                },
            ))
        };
        let (enhance, enhance_params) = build(StageTag::Enhance)?;
        let (reject, reject_params) = build(StageTag::Reject)?;
        let (cot, cot_params) = build(StageTag::Cot)?;
        let (answer, answer_params) = build(StageTag::Answer)?;
        Ok(StageGenerators {
            enhance,
            enhance_params,
            reject,
            reject_params,
            cot,
            cot_params,
            answer,
            answer_params,
            retriever: self.retrieval.build()?,
        })
    }
}

/// Per-request generation knobs taken from a stage's binding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Resolved backends for one pipeline run. Tests swap in counting or
/// fault-injecting wrappers here.
#[derive(Clone)]
pub struct StageGenerators {
    pub enhance: Arc<dyn Generator>,
    pub enhance_params: GenParams,
    pub reject: Arc<dyn Generator>,
    pub reject_params: GenParams,
    pub cot: Arc<dyn Generator>,
    pub cot_params: GenParams,
    pub answer: Arc<dyn Generator>,
    pub answer_params: GenParams,
    pub retriever: Arc<dyn Retriever>,
}

impl StageGenerators {
    /// All-mock backends with default parameters.
    pub fn mock() -> Self {
        let params = GenParams {
            temperature: 0.3,
            max_tokens: 2048,
        };
        Self {
            enhance: Arc::new(MockGenerator),
            enhance_params: params,
            reject: Arc::new(MockGenerator),
            reject_params: params,
            cot: Arc::new(MockGenerator),
            cot_params: params,
            answer: Arc::new(MockGenerator),
            answer_params: params,
            retriever: Arc::new(MockRetriever),
        }
    }
}
