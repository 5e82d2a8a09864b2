//! Per-record stage operations.

use crate::data::{
    wrap_think, CompositeSample, CotRecord, DpoTriple, EnhancedRecord, FinalRecord, RagRecord,
    RawQuestion, RejectedRecord, StageRecord,
};
use crate::provider::{GenRequest, GenResponse, PromptInputs, ProviderError, StageTag};

use super::config::{EmptyRetrievalPolicy, GenParams, PromptSource, StageGenerators};
use super::template::TemplateSet;
use super::PipelineConfig;

/// A record that could not pass a stage; quarantined, never silently dropped.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FailedEntry {
    pub id: String,
    pub stage: String,
    pub error: String,
}

/// Outcome of one record at one stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOutcome<T> {
    Produced(T),
    /// Intentionally not carried forward (policy decision, not an error).
    Skipped { reason: String },
}

/// Instruction appended for the single repair attempt after a malformed
/// reasoning-chain response.
const COT_REPAIR_SUFFIX: &str =
    "\n\nYour previous reply was not a valid JSON array of strings. Reply again \
     with only a JSON array of strings, one reasoning step per element.";

/// Everything the per-record operations need: resolved backends, templates,
/// and policies.
pub struct PipelineCtx {
    pub generators: StageGenerators,
    pub templates: TemplateSet,
    pub think_directive: String,
    pub prompt_source: PromptSource,
    pub empty_retrieval: EmptyRetrievalPolicy,
    pub concurrency: usize,
}

impl PipelineCtx {
    pub fn new(config: &PipelineConfig) -> Result<Self, super::PipelineError> {
        Ok(Self {
            generators: config.build_generators()?,
            templates: config.load_templates()?,
            think_directive: config.think_directive.clone(),
            prompt_source: config.prompt_source,
            empty_retrieval: config.empty_retrieval,
            concurrency: config.concurrency.max(1),
        })
    }

    pub fn with_generators(config: &PipelineConfig, generators: StageGenerators) -> Result<Self, super::PipelineError> {
        let mut ctx = Self::new(config)?;
        ctx.generators = generators;
        Ok(ctx)
    }

    fn fail(id: &str, stage: &str, err: impl std::fmt::Display) -> FailedEntry {
        FailedEntry {
            id: id.to_string(),
            stage: stage.to_string(),
            error: err.to_string(),
        }
    }

    async fn generate(
        &self,
        stage: StageTag,
        params: GenParams,
        inputs: PromptInputs,
        want_raw_reasoning: bool,
        user_suffix: &str,
    ) -> Result<GenResponse, ProviderError> {
        let template = self
            .templates
            .for_stage(stage)
            .expect("generation stages have templates");
        let (system, mut user) = template.render(&inputs);
        user.push_str(user_suffix);
        let generator = match stage {
            StageTag::Enhance => &self.generators.enhance,
            StageTag::Reject => &self.generators.reject,
            StageTag::Cot => &self.generators.cot,
            StageTag::Answer => &self.generators.answer,
            StageTag::Judge => unreachable!("judge is not a pipeline stage"),
        };
        let req = GenRequest::new(stage, system, user)
            .with_temperature(params.temperature)
            .with_max_tokens(params.max_tokens)
            .with_raw_reasoning(want_raw_reasoning)
            .with_inputs(inputs);
        generator.chat_complete(&req).await
    }

    /// Stage 1: rewrite the raw question into its enhanced form.
    pub async fn enhance_question(
        &self,
        rec: &RawQuestion,
    ) -> Result<EnhancedRecord, FailedEntry> {
        let inputs = PromptInputs {
            q_raw: rec.q_raw.clone(),
            ..Default::default()
        };
        let resp = self
            .generate(StageTag::Enhance, self.generators.enhance_params, inputs, false, "")
            .await
            .map_err(|err| Self::fail(&rec.id, "enhance", err))?;
        if resp.text.is_empty() {
            return Err(Self::fail(&rec.id, "enhance", "empty enhanced question"));
        }
        Ok(EnhancedRecord::from_raw(rec, resp.text))
    }

    /// Stage 2: generate the rejected sample from a single completion with
    /// the think directive appended.
    pub async fn generate_rejected(
        &self,
        rec: &EnhancedRecord,
    ) -> Result<RejectedRecord, FailedEntry> {
        let inputs = PromptInputs {
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            ..Default::default()
        };
        let resp = self
            .generate(
                StageTag::Reject,
                self.generators.reject_params,
                inputs,
                true,
                &self.think_directive,
            )
            .await
            .map_err(|err| Self::fail(&rec.id, "reject", err))?;
        if resp.text.is_empty() {
            return Err(Self::fail(&rec.id, "reject", "empty answer"));
        }
        let (reasoning, missing) = match resp.raw_reasoning {
            Some(reasoning) => (reasoning, false),
            None => (String::new(), true),
        };
        Ok(RejectedRecord::from_enhanced(
            rec,
            CompositeSample::new(reasoning, resp.text),
            missing,
        ))
    }

    /// Stage 3: retrieve and integrate external knowledge.
    pub async fn integrate_knowledge(
        &self,
        rec: &RejectedRecord,
    ) -> Result<StageOutcome<RagRecord>, FailedEntry> {
        let result = self
            .generators
            .retriever
            .retrieve(&rec.q_enhanced)
            .await
            .map_err(|err| Self::fail(&rec.id, "rag", err))?;
        if result.is_empty() {
            return Ok(match self.empty_retrieval {
                EmptyRetrievalPolicy::SkipRecord => StageOutcome::Skipped {
                    reason: "empty retrieval".to_string(),
                },
                EmptyRetrievalPolicy::ProceedWithoutRag => {
                    StageOutcome::Produced(RagRecord::from_rejected(rec, "", true))
                }
            });
        }
        Ok(StageOutcome::Produced(RagRecord::from_rejected(
            rec,
            result.merged,
            false,
        )))
    }

    fn parse_cot_steps(text: &str) -> Result<Vec<String>, serde_json::Error> {
        serde_json::from_str(strip_code_fence(text))
    }

    /// Stage 4.1: build the preferred reasoning chain. The generator must
    /// reply with a JSON array of step strings; one repair attempt is made
    /// before the record fails.
    pub async fn build_preferred_cot(&self, rec: &RagRecord) -> Result<String, FailedEntry> {
        let inputs = PromptInputs {
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            rag_content: rec.rag_content.clone(),
            ..Default::default()
        };
        let resp = self
            .generate(StageTag::Cot, self.generators.cot_params, inputs.clone(), false, "")
            .await
            .map_err(|err| Self::fail(&rec.id, "cot", err))?;

        let steps = match Self::parse_cot_steps(&resp.text) {
            Ok(steps) => steps,
            Err(_) => {
                let repaired = self
                    .generate(
                        StageTag::Cot,
                        self.generators.cot_params,
                        inputs,
                        false,
                        COT_REPAIR_SUFFIX,
                    )
                    .await
                    .map_err(|err| Self::fail(&rec.id, "cot", err))?;
                Self::parse_cot_steps(&repaired.text).map_err(|err| {
                    Self::fail(&rec.id, "cot", format!("reasoning chain not a JSON array: {err}"))
                })?
            }
        };

        let reasoning = steps
            .iter()
            .map(String::as_str)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
        if reasoning.is_empty() {
            return Err(Self::fail(&rec.id, "cot", "empty reasoning steps"));
        }
        Ok(reasoning)
    }

    /// Stage 4.2: generate the preferred answer from the original question,
    /// the retrieved knowledge, and the preferred reasoning chain.
    pub async fn generate_preferred_answer(
        &self,
        rec: &RagRecord,
        reasoning_w: &str,
    ) -> Result<FinalRecord, FailedEntry> {
        if reasoning_w.is_empty() {
            return Err(Self::fail(&rec.id, "answer", "reasoning_w must not be empty"));
        }
        let inputs = PromptInputs {
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            rag_content: rec.rag_content.clone(),
            reasoning_w: reasoning_w.to_string(),
        };
        let resp = self
            .generate(StageTag::Answer, self.generators.answer_params, inputs, false, "")
            .await
            .map_err(|err| Self::fail(&rec.id, "answer", err))?;
        if resp.text.is_empty() {
            return Err(Self::fail(&rec.id, "answer", "empty answer"));
        }
        let record = FinalRecord::from_rag(rec, CompositeSample::new(reasoning_w, resp.text));
        let report = record.validate();
        if !report.is_valid() {
            return Err(Self::fail(&rec.id, "answer", report));
        }
        Ok(record)
    }

    /// Stage 4 for the full run: both sub-steps fused per record.
    pub async fn build_preferred(&self, rec: &RagRecord) -> Result<FinalRecord, FailedEntry> {
        let reasoning_w = self.build_preferred_cot(rec).await?;
        self.generate_preferred_answer(rec, &reasoning_w).await
    }

    /// Stage 4.1 as a standalone artifact (for the `prefer-cot` command).
    pub async fn build_cot_record(&self, rec: &RagRecord) -> Result<CotRecord, FailedEntry> {
        let reasoning_w = self.build_preferred_cot(rec).await?;
        Ok(CotRecord::from_rag(rec, reasoning_w))
    }

    /// Stage 5: format the training triple. Pure.
    pub fn format_dpo(&self, rec: &FinalRecord) -> Result<DpoTriple, FailedEntry> {
        let question = match self.prompt_source {
            PromptSource::Enhanced => &rec.q_enhanced,
            PromptSource::Raw => &rec.q_raw,
        };
        let prompt = format!("{question}{}", self.think_directive);
        let chosen = wrap_think(&rec.reasoning_w, &rec.answer_w)
            .map_err(|err| Self::fail(&rec.id, "format", err))?;
        let rejected = wrap_think(&rec.reasoning_l, &rec.answer_l)
            .map_err(|err| Self::fail(&rec.id, "format", err))?;
        let triple = DpoTriple::new(prompt, chosen, rejected);
        let report = triple.validate_with_directive(&self.think_directive);
        if !report.is_valid() {
            return Err(Self::fail(&rec.id, "format", report));
        }
        Ok(triple)
    }
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(body) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop the info string ("json") on the opening fence line.
    let body = match body.find('\n') {
        Some(idx) => &body[idx + 1..],
        None => body,
    };
    body.strip_suffix("```").map(str::trim).unwrap_or(trimmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split_think;
    use std::sync::Arc;
    use std::time::Duration;

    use async_trait::async_trait;
    use crate::provider::{GenResponse, Generator, ProviderError};

    fn ctx() -> PipelineCtx {
        let config = PipelineConfig::default();
        PipelineCtx::with_generators(&config, StageGenerators::mock()).unwrap()
    }

    fn raw(id: &str, q: &str) -> RawQuestion {
        RawQuestion::new(id, q)
    }

    #[tokio::test]
    async fn enhance_follows_mock_contract() {
        let rec = ctx().enhance_question(&raw("q1", "abc")).await.unwrap();
        assert_eq!(rec.q_enhanced, "ENH::abc");
        assert_eq!(rec.id, "q1");
    }

    #[tokio::test]
    async fn rejected_uses_reasoning_channel() {
        let c = ctx();
        let enhanced = c.enhance_question(&raw("q1", "abc")).await.unwrap();
        let rejected = c.generate_rejected(&enhanced).await.unwrap();
        assert_eq!(rejected.reasoning_l, "REJCOT::ENH::abc");
        assert_eq!(rejected.answer_l, "REJANS::ENH::abc");
        assert!(!rejected.missing_trace);
    }

    /// Generator that emits a think block inline instead of using the
    /// structured channel.
    struct InlineThink;

    #[async_trait]
    impl Generator for InlineThink {
        async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
            let (reasoning, text) = crate::provider::extract_reasoning(
                "<think>\ninline trace\n</think>\n\nthe answer".to_string(),
                None,
            );
            assert!(req.want_raw_reasoning);
            Ok(GenResponse {
                text,
                raw_reasoning: reasoning,
                provider_id: "inline".into(),
                latency: Duration::ZERO,
            })
        }
    }

    /// Generator with no reasoning at all.
    struct PlainText;

    #[async_trait]
    impl Generator for PlainText {
        async fn chat_complete(&self, _req: &GenRequest) -> Result<GenResponse, ProviderError> {
            Ok(GenResponse {
                text: "just an answer".into(),
                raw_reasoning: None,
                provider_id: "plain".into(),
                latency: Duration::ZERO,
            })
        }
    }

    #[tokio::test]
    async fn rejected_falls_back_to_embedded_think_block() {
        let mut generators = StageGenerators::mock();
        generators.reject = Arc::new(InlineThink);
        let c = PipelineCtx::with_generators(&PipelineConfig::default(), generators).unwrap();
        let enhanced = EnhancedRecord::from_raw(&raw("q1", "abc"), "E");
        let rejected = c.generate_rejected(&enhanced).await.unwrap();
        assert_eq!(rejected.reasoning_l, "inline trace");
        assert_eq!(rejected.answer_l, "the answer");
        assert!(!rejected.missing_trace);
    }

    #[tokio::test]
    async fn rejected_flags_missing_trace() {
        let mut generators = StageGenerators::mock();
        generators.reject = Arc::new(PlainText);
        let c = PipelineCtx::with_generators(&PipelineConfig::default(), generators).unwrap();
        let enhanced = EnhancedRecord::from_raw(&raw("q1", "abc"), "E");
        let rejected = c.generate_rejected(&enhanced).await.unwrap();
        assert_eq!(rejected.reasoning_l, "");
        assert_eq!(rejected.answer_l, "just an answer");
        assert!(rejected.missing_trace);
        assert!(rejected.validate().is_valid());
    }

    #[tokio::test]
    async fn knowledge_integration_follows_mock_contract() {
        let c = ctx();
        let enhanced = EnhancedRecord::from_raw(&raw("q1", "abc"), "E");
        let rejected = c.generate_rejected(&enhanced).await.unwrap();
        match c.integrate_knowledge(&rejected).await.unwrap() {
            StageOutcome::Produced(rag) => {
                assert_eq!(rag.rag_content, "RAG::E::1\n---\nRAG::E::2");
                assert!(!rag.retrieval_empty);
            }
            StageOutcome::Skipped { .. } => panic!("mock retrieval is never empty"),
        }
    }

    /// Retriever that returns nothing.
    struct EmptyRetriever;

    #[async_trait]
    impl crate::provider::Retriever for EmptyRetriever {
        async fn retrieve(
            &self,
            query: &str,
        ) -> Result<crate::provider::RetrievalResult, ProviderError> {
            Ok(crate::provider::RetrievalResult {
                query: query.to_string(),
                passages: vec![],
                merged: String::new(),
            })
        }
    }

    #[tokio::test]
    async fn empty_retrieval_policies() {
        let rejected = RejectedRecord::from_enhanced(
            &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
            CompositeSample::new("r", "a"),
            false,
        );

        let mut generators = StageGenerators::mock();
        generators.retriever = Arc::new(EmptyRetriever);
        let mut config = PipelineConfig::default();

        config.empty_retrieval = EmptyRetrievalPolicy::SkipRecord;
        let c = PipelineCtx::with_generators(&config, generators.clone()).unwrap();
        assert!(matches!(
            c.integrate_knowledge(&rejected).await.unwrap(),
            StageOutcome::Skipped { .. }
        ));

        config.empty_retrieval = EmptyRetrievalPolicy::ProceedWithoutRag;
        let c = PipelineCtx::with_generators(&config, generators).unwrap();
        match c.integrate_knowledge(&rejected).await.unwrap() {
            StageOutcome::Produced(rag) => {
                assert_eq!(rag.rag_content, "");
                assert!(rag.retrieval_empty);
                assert!(rag.validate().is_valid());
            }
            StageOutcome::Skipped { .. } => panic!("policy proceeds"),
        }
    }

    #[tokio::test]
    async fn preferred_cot_joins_steps_with_blank_lines() {
        let c = ctx();
        let rag = RagRecord::from_rejected(
            &RejectedRecord::from_enhanced(
                &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                CompositeSample::new("r", "a"),
                false,
            ),
            "R",
            false,
        );
        let reasoning = c.build_preferred_cot(&rag).await.unwrap();
        assert_eq!(reasoning, "COT1::E\n\nCOT2::R");
    }

    /// Generator that replies with prose once, then valid JSON.
    struct ProseThenJson {
        calls: std::sync::atomic::AtomicU32,
    }

    #[async_trait]
    impl Generator for ProseThenJson {
        async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
            let call = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let text = if call == 0 {
                "Step one, then step two.".to_string()
            } else {
                assert!(req.user_prompt.contains("JSON array"));
                "```json\n[\"s1\"]\n```".to_string()
            };
            Ok(GenResponse {
                text,
                raw_reasoning: None,
                provider_id: "prose".into(),
                latency: Duration::ZERO,
            })
        }
    }

    #[tokio::test]
    async fn cot_repair_retry_recovers_once() {
        let mut generators = StageGenerators::mock();
        generators.cot = Arc::new(ProseThenJson {
            calls: std::sync::atomic::AtomicU32::new(0),
        });
        let c = PipelineCtx::with_generators(&PipelineConfig::default(), generators).unwrap();
        let rag = RagRecord::from_rejected(
            &RejectedRecord::from_enhanced(
                &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                CompositeSample::new("r", "a"),
                false,
            ),
            "R",
            false,
        );
        assert_eq!(c.build_preferred_cot(&rag).await.unwrap(), "s1");
    }

    /// Generator that always replies with prose.
    struct AlwaysProse;

    #[async_trait]
    impl Generator for AlwaysProse {
        async fn chat_complete(&self, _req: &GenRequest) -> Result<GenResponse, ProviderError> {
            Ok(GenResponse {
                text: "not json".into(),
                raw_reasoning: None,
                provider_id: "prose".into(),
                latency: Duration::ZERO,
            })
        }
    }

    #[tokio::test]
    async fn cot_fails_after_failed_repair() {
        let mut generators = StageGenerators::mock();
        generators.cot = Arc::new(AlwaysProse);
        let c = PipelineCtx::with_generators(&PipelineConfig::default(), generators).unwrap();
        let rag = RagRecord::from_rejected(
            &RejectedRecord::from_enhanced(
                &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                CompositeSample::new("r", "a"),
                false,
            ),
            "R",
            false,
        );
        let failed = c.build_preferred_cot(&rag).await.unwrap_err();
        assert_eq!(failed.stage, "cot");
        assert_eq!(failed.id, "q1");
    }

    #[tokio::test]
    async fn preferred_answer_uses_reasoning_prefix_and_validates() {
        let c = ctx();
        let rag = RagRecord::from_rejected(
            &RejectedRecord::from_enhanced(
                &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                CompositeSample::new("r", "a"),
                false,
            ),
            "R",
            false,
        );
        let reasoning = c.build_preferred_cot(&rag).await.unwrap();
        let record = c.generate_preferred_answer(&rag, &reasoning).await.unwrap();
        assert_eq!(record.answer_w, "ANS::COT1::E\n\nCOT2::R"); // 16-char prefix
        assert!(record.validate().is_valid());

        let err = c.generate_preferred_answer(&rag, "").await.unwrap_err();
        assert_eq!(err.stage, "answer");
    }

    #[tokio::test]
    async fn format_produces_valid_triples() {
        let c = ctx();
        let record = FinalRecord::from_rag(
            &RagRecord::from_rejected(
                &RejectedRecord::from_enhanced(
                    &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                    CompositeSample::new("rl", "al"),
                    false,
                ),
                "R",
                false,
            ),
            CompositeSample::new("R", "A"),
        );
        let triple = c.format_dpo(&record).unwrap();
        assert_eq!(triple.prompt, "E /think");
        assert_eq!(triple.chosen, "<think>\nR\n</think>\n\nA");
        assert_eq!(triple.rejected, "<think>\nrl\n</think>\n\nal");
        assert!(triple.validate().is_valid());
    }

    #[tokio::test]
    async fn format_can_use_raw_question() {
        let mut config = PipelineConfig::default();
        config.prompt_source = PromptSource::Raw;
        let c = PipelineCtx::with_generators(&config, StageGenerators::mock()).unwrap();
        let record = FinalRecord::from_rag(
            &RagRecord::from_rejected(
                &RejectedRecord::from_enhanced(
                    &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                    CompositeSample::new("rl", "al"),
                    false,
                ),
                "R",
                false,
            ),
            CompositeSample::new("R", "A"),
        );
        let triple = c.format_dpo(&record).unwrap();
        assert!(triple.prompt.starts_with("abc"));
    }

    #[tokio::test]
    async fn format_keeps_missing_trace_rejected_valid() {
        let c = ctx();
        let record = FinalRecord::from_rag(
            &RagRecord::from_rejected(
                &RejectedRecord::from_enhanced(
                    &EnhancedRecord::from_raw(&raw("q1", "abc"), "E"),
                    CompositeSample::new("", "al"),
                    true,
                ),
                "R",
                false,
            ),
            CompositeSample::new("R", "A"),
        );
        let triple = c.format_dpo(&record).unwrap();
        let (reasoning, answer) = split_think(&triple.rejected).unwrap();
        assert_eq!(reasoning, "");
        assert_eq!(answer, "al");
        assert!(triple.validate().is_valid());
    }

    #[test]
    fn code_fences_are_stripped() {
        assert_eq!(strip_code_fence("```json\n[\"a\"]\n```"), "[\"a\"]");
        assert_eq!(strip_code_fence("```\n[\"a\"]\n```"), "[\"a\"]");
        assert_eq!(strip_code_fence("[\"a\"]"), "[\"a\"]");
    }
}
