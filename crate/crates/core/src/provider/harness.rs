//! Instrumented provider wrappers for tests and fault-injection runs:
//! per-stage call counting, predicate-based failure injection, and a
//! semaphore-enforced concurrency cap.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use tokio::sync::Semaphore;

use super::{
    GenRequest, GenResponse, Generator, ProviderError, RetrievalResult, Retriever, StageTag,
};

/// Counts chat-completion calls per stage tag.
pub struct CountingGenerator {
    inner: Arc<dyn Generator>,
    counts: Mutex<HashMap<StageTag, u64>>,
}

impl CountingGenerator {
    pub fn new(inner: Arc<dyn Generator>) -> Arc<Self> {
        Arc::new(Self {
            inner,
            counts: Mutex::new(HashMap::new()),
        })
    }

    pub fn count(&self, stage: StageTag) -> u64 {
        *self.counts.lock().unwrap().get(&stage).unwrap_or(&0)
    }

    pub fn total(&self) -> u64 {
        self.counts.lock().unwrap().values().sum()
    }
}

#[async_trait]
impl Generator for CountingGenerator {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
        *self.counts.lock().unwrap().entry(req.stage_tag).or_insert(0) += 1;
        self.inner.chat_complete(req).await
    }
}

/// Counts retrieval calls.
pub struct CountingRetriever {
    inner: Arc<dyn Retriever>,
    calls: AtomicU64,
}

impl CountingRetriever {
    pub fn new(inner: Arc<dyn Retriever>) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: AtomicU64::new(0),
        })
    }

    pub fn count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Retriever for CountingRetriever {
    async fn retrieve(&self, query: &str) -> Result<RetrievalResult, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.retrieve(query).await
    }
}

/// Fails requests whose inputs contain any configured needle, optionally
/// restricted to one stage. Failures are non-retryable, modeling a request
/// that already exhausted its retry budget.
pub struct FailingGenerator {
    inner: Arc<dyn Generator>,
    needles: Vec<String>,
    stage: Option<StageTag>,
}

impl FailingGenerator {
    pub fn new(inner: Arc<dyn Generator>, needles: Vec<String>, stage: Option<StageTag>) -> Self {
        Self {
            inner,
            needles,
            stage,
        }
    }

    fn should_fail(&self, req: &GenRequest) -> bool {
        if let Some(stage) = self.stage {
            if stage != req.stage_tag {
                return false;
            }
        }
        let haystacks = [
            &req.user_prompt,
            &req.inputs.q_raw,
            &req.inputs.q_enhanced,
            &req.inputs.rag_content,
            &req.inputs.reasoning_w,
        ];
        self.needles
            .iter()
            .any(|needle| haystacks.iter().any(|hay| hay.contains(needle)))
    }
}

#[async_trait]
impl Generator for FailingGenerator {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
        if self.should_fail(req) {
            return Err(ProviderError::Injected(format!(
                "matched fault needle at stage {}",
                req.stage_tag
            )));
        }
        self.inner.chat_complete(req).await
    }
}

/// Enforces a hard cap on concurrently in-flight requests.
pub struct CappedGenerator {
    inner: Arc<dyn Generator>,
    limiter: Arc<Semaphore>,
}

impl CappedGenerator {
    pub fn new(inner: Arc<dyn Generator>, cap: usize) -> Self {
        Self {
            inner,
            limiter: Arc::new(Semaphore::new(cap.max(1))),
        }
    }
}

#[async_trait]
impl Generator for CappedGenerator {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
        let _permit = self
            .limiter
            .acquire()
            .await
            .map_err(|_| ProviderError::Transport("limiter closed".into()))?;
        self.inner.chat_complete(req).await
    }
}
