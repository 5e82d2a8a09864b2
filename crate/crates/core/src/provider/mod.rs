//! Uniform interface to text generators and retrieval sources.
//!
//! Live traffic goes through an OpenAI-style chat-completions client and a
//! JSON retrieval client, both with retry/backoff and an optional shared
//! concurrency cap. Offline work and tests use [`MockGenerator`] /
//! [`MockRetriever`], which are pure functions of their inputs.

mod harness;
mod http;
mod mock;
mod retrieval;
mod retry;

pub use harness::{CappedGenerator, CountingGenerator, CountingRetriever, FailingGenerator};
pub use http::{HttpGenerator, HttpProviderConfig, HttpRetrievalConfig, HttpRetriever};
pub use mock::{mock_text, MockGenerator, MockOutput, MockRetriever};
pub use retrieval::{clean_passages, merge_passages, CleanupOptions};
pub use retry::{with_retry, RetryPolicy};

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::split_think;

/// Which pipeline stage a generation request serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Enhance,
    Reject,
    Cot,
    Answer,
    Judge,
}

impl StageTag {
    pub const ALL: [StageTag; 5] = [
        StageTag::Enhance,
        StageTag::Reject,
        StageTag::Cot,
        StageTag::Answer,
        StageTag::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageTag::Enhance => "enhance",
            StageTag::Reject => "reject",
            StageTag::Cot => "cot",
            StageTag::Answer => "answer",
            StageTag::Judge => "judge",
        }
    }
}

impl std::fmt::Display for StageTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Structured values the prompt template was rendered with. Live providers
/// only see the rendered prompts; the mock derives its output from these.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptInputs {
    pub q_raw: String,
    pub q_enhanced: String,
    pub rag_content: String,
    pub reasoning_w: String,
}

/// One chat-completion request.
#[derive(Debug, Clone)]
pub struct GenRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub stage_tag: StageTag,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_raw_reasoning: bool,
    pub inputs: PromptInputs,
}

impl GenRequest {
    pub fn new(
        stage_tag: StageTag,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            stage_tag,
            temperature: 0.2,
            max_tokens: 1024,
            want_raw_reasoning: false,
            inputs: PromptInputs::default(),
        }
    }

    pub fn with_inputs(mut self, inputs: PromptInputs) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn with_raw_reasoning(mut self, want: bool) -> Self {
        self.want_raw_reasoning = want;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }

    /// Clamps to at least one token.
    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens.max(1);
        self
    }
}

/// One chat-completion response.
#[derive(Debug, Clone)]
pub struct GenResponse {
    pub text: String,
    pub raw_reasoning: Option<String>,
    pub provider_id: String,
    pub latency: Duration,
}

/// Retrieval output: the raw passages plus the cleaned, merged text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalResult {
    pub query: String,
    pub passages: Vec<String>,
    pub merged: String,
}

impl RetrievalResult {
    /// True when nothing usable survived retrieval and cleanup.
    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("injected fault: {0}")]
    Injected(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<ProviderError>,
    },
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited(_) | ProviderError::Timeout(_) | ProviderError::Transport(_)
        )
    }
}

/// A chat-completion backend.
#[async_trait]
pub trait Generator: Send + Sync {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError>;
}

/// A retrieval backend.
#[async_trait]
pub trait Retriever: Send + Sync {
    async fn retrieve(&self, query: &str) -> Result<RetrievalResult, ProviderError>;
}

/// Separates a reasoning trace from the answer text of a completion.
///
/// Preference order: the provider's structured reasoning channel, then a
/// think block embedded in the text. Returns `None` reasoning when neither
/// exists; the caller decides how to flag the missing trace.
pub fn extract_reasoning(text: String, structured: Option<String>) -> (Option<String>, String) {
    if let Some(reasoning) = structured {
        return (Some(reasoning), text);
    }
    match split_think(text.trim_start()) {
        Ok((reasoning, answer)) => (Some(reasoning), answer),
        Err(_) => (None, text),
    }
}
