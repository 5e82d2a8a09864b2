//! Live HTTP clients: an OpenAI-style chat-completions generator and a JSON
//! retrieval client.
//!
//! Wire contracts:
//!
//! - Generation: `POST {base_url}/v1/chat/completions` with
//!   `{model, messages, temperature, max_tokens}`; the completion text is
//!   `choices[0].message.content`, with an optional structured reasoning
//!   channel at `choices[0].message.reasoning_content`.
//! - Retrieval: `POST {base_url}/search` with `{query, top_k}`; the response
//!   is `{passages: [..]}`.
//!
//! Credentials come from environment variables, never from config values.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::retrieval::{clean_passages, merge_passages, CleanupOptions};
use super::retry::{with_retry, RetryPolicy};
use super::{
    extract_reasoning, GenRequest, GenResponse, Generator, ProviderError, RetrievalResult,
    Retriever,
};

pub const DEFAULT_API_KEY_ENV: &str = "PROVIDER_API_KEY";
pub const DEFAULT_RETRIEVAL_KEY_ENV: &str = "RETRIEVAL_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Optional global in-flight request cap shared across clients.
    pub max_concurrency: Option<usize>,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_concurrency: None,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    reasoning_content: Option<String>,
}

fn classify_status(status: u16, message: String) -> ProviderError {
    match status {
        401 | 403 => ProviderError::Auth(message),
        429 => ProviderError::RateLimited(message),
        408 => ProviderError::Timeout(message),
        500..=599 => ProviderError::Transport(message),
        _ => ProviderError::Api { status, message },
    }
}

fn classify_reqwest(err: reqwest::Error) -> ProviderError {
    if err.is_timeout() {
        ProviderError::Timeout(err.to_string())
    } else if err.is_connect() || err.is_request() {
        ProviderError::Transport(err.to_string())
    } else {
        ProviderError::MalformedResponse(err.to_string())
    }
}

async fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &reqwest::Client,
    url: &str,
    bearer: Option<&str>,
    body: &B,
) -> Result<R, ProviderError> {
    let mut req = client.post(url).json(body);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req.send().await.map_err(classify_reqwest)?;
    let status = resp.status();
    if !status.is_success() {
        let message = resp.text().await.unwrap_or_default();
        return Err(classify_status(status.as_u16(), message));
    }
    resp.json::<R>()
        .await
        .map_err(|err| ProviderError::MalformedResponse(err.to_string()))
}

/// Chat-completions client with retry, timeout, and an optional shared
/// concurrency cap.
pub struct HttpGenerator {
    config: HttpProviderConfig,
    client: reqwest::Client,
    api_key: Option<String>,
    limiter: Option<Arc<Semaphore>>,
}

impl HttpGenerator {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|err| ProviderError::Transport(err.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        let limiter = config
            .max_concurrency
            .map(|cap| Arc::new(Semaphore::new(cap.max(1))));
        Ok(Self {
            config,
            client,
            api_key,
            limiter,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

#[async_trait]
impl Generator for HttpGenerator {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
        let _permit = match &self.limiter {
            Some(limiter) => Some(
                limiter
                    .clone()
                    .acquire_owned()
                    .await
                    .map_err(|_| ProviderError::Transport("limiter closed".into()))),
            None => None,
        }
        .transpose()?;

        let started = Instant::now();
        let body = ChatRequestBody {
            model: &self.config.model,
            messages: {
                let mut messages = Vec::with_capacity(2);
                if !req.system_prompt.is_empty() {
                    messages.push(ChatMessage {
                        role: "system",
                        content: &req.system_prompt,
                    });
                }
                messages.push(ChatMessage {
                    role: "user",
                    content: &req.user_prompt,
                });
                messages
            },
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let url = self.endpoint();

        let parsed: ChatResponseBody = with_retry(&self.config.retry, || {
            post_json(&self.client, &url, self.api_key.as_deref(), &body)
        })
        .await?;

        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::MalformedResponse("no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        if text.is_empty() && choice.message.reasoning_content.is_none() {
            return Err(ProviderError::MalformedResponse(
                "empty completion text".into(),
            ));
        }

        let (raw_reasoning, text) = if req.want_raw_reasoning {
            extract_reasoning(text, choice.message.reasoning_content)
        } else {
            (None, text)
        };
        Ok(GenResponse {
            text,
            raw_reasoning,
            provider_id: format!("http:{}", self.config.model),
            latency: started.elapsed(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpRetrievalConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub top_k: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub cleanup: CleanupOptions,
}

impl Default for HttpRetrievalConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            api_key_env: DEFAULT_RETRIEVAL_KEY_ENV.to_string(),
            top_k: 5,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            cleanup: CleanupOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct SearchRequestBody<'a> {
    query: &'a str,
    top_k: usize,
}

#[derive(Deserialize)]
struct SearchResponseBody {
    #[serde(default)]
    passages: Vec<String>,
}

/// Retrieval client; zero returned passages is a success with the
/// empty-retrieval flag set, not an error.
pub struct HttpRetriever {
    config: HttpRetrievalConfig,
    client: reqwest::Client,
    api_key: Option<String>,
}

impl HttpRetriever {
    pub fn new(config: HttpRetrievalConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|err| ProviderError::Transport(err.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(Self {
            config,
            client,
            api_key,
        })
    }
}

#[async_trait]
impl Retriever for HttpRetriever {
    async fn retrieve(&self, query: &str) -> Result<RetrievalResult, ProviderError> {
        let url = format!("{}/search", self.config.base_url.trim_end_matches('/'));
        let body = SearchRequestBody {
            query,
            top_k: self.config.top_k,
        };
        let parsed: SearchResponseBody = with_retry(&self.config.retry, || {
            post_json(&self.client, &url, self.api_key.as_deref(), &body)
        })
        .await?;
        let merged = merge_passages(
            &clean_passages(&parsed.passages, &self.config.cleanup),
            &self.config.cleanup,
        );
        Ok(RetrievalResult {
            query: query.to_string(),
            passages: parsed.passages,
            merged,
        })
    }
}
