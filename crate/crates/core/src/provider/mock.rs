//! Deterministic offline providers.
//!
//! Mock output is a pure function of `(stage_tag, inputs)`, so any pipeline
//! run against the mock is byte-reproducible. The per-stage contracts are
//! frozen; tests depend on them literally.
//!
//! - `enhance` → `ENH::{q_raw}`
//! - `reject`  → answer `REJANS::{q_enhanced}`, reasoning `REJCOT::{q_enhanced}`
//! - `cot`     → JSON array `["COT1::{q_enhanced}", "COT2::{rag prefix}"]`
//! - `answer`  → `ANS::{reasoning prefix}`
//! - `judge`   → a fixed score object, every dimension 7.0
//!
//! Prefixes are the first sixteen characters of the referenced input.

use std::time::Duration;

use async_trait::async_trait;

use super::retrieval::{clean_passages, merge_passages, CleanupOptions};
use super::{
    GenRequest, GenResponse, Generator, PromptInputs, ProviderError, RetrievalResult, Retriever,
    StageTag,
};

const PREFIX_CHARS: usize = 16;

fn prefix(text: &str) -> &str {
    match text.char_indices().nth(PREFIX_CHARS) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

/// Mock completion: deterministic text plus an optional reasoning channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockOutput {
    pub text: String,
    pub reasoning: Option<String>,
}

/// The pure mock generation function.
pub fn mock_text(stage: StageTag, inputs: &PromptInputs, want_raw_reasoning: bool) -> MockOutput {
    match stage {
        StageTag::Enhance => MockOutput {
            text: format!("ENH::{}", inputs.q_raw),
            reasoning: None,
        },
        StageTag::Reject => MockOutput {
            text: format!("REJANS::{}", inputs.q_enhanced),
            reasoning: want_raw_reasoning.then(|| format!("REJCOT::{}", inputs.q_enhanced)),
        },
        StageTag::Cot => {
            let steps = vec![
                format!("COT1::{}", inputs.q_enhanced),
                format!("COT2::{}", prefix(&inputs.rag_content)),
            ];
            MockOutput {
                text: serde_json::to_string(&steps).expect("string array serializes"),
                reasoning: None,
            }
        }
        StageTag::Answer => MockOutput {
            text: format!("ANS::{}", prefix(&inputs.reasoning_w)),
            reasoning: None,
        },
        StageTag::Judge => MockOutput {
            text: r#"{"information_richness":7.0,"relevance":7.0,"accuracy":7.0}"#.to_string(),
            reasoning: None,
        },
    }
}

/// Offline generator with the contract above.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator;

#[async_trait]
impl Generator for MockGenerator {
    async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
        let out = mock_text(req.stage_tag, &req.inputs, req.want_raw_reasoning);
        Ok(GenResponse {
            text: out.text,
            raw_reasoning: out.reasoning,
            provider_id: "mock".to_string(),
            latency: Duration::ZERO,
        })
    }
}

/// Offline retriever: two synthetic passages derived from the query, merged
/// through the standard cleanup path with a permissive configuration.
#[derive(Debug, Clone, Default)]
pub struct MockRetriever;

#[async_trait]
impl Retriever for MockRetriever {
    async fn retrieve(&self, query: &str) -> Result<RetrievalResult, ProviderError> {
        let passages = vec![format!("RAG::{query}::1"), format!("RAG::{query}::2")];
        let opts = CleanupOptions::permissive();
        let merged = merge_passages(&clean_passages(&passages, &opts), &opts);
        Ok(RetrievalResult {
            query: query.to_string(),
            passages,
            merged,
        })
    }
}
