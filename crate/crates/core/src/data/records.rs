//! Record schemas for every pipeline stage.
//!
//! Stage files share a schema-growth discipline: every stage's record carries
//! all fields of the previous stage unchanged and adds its own. Composite
//! samples (a reasoning trace plus a final answer) are stored flattened as
//! `reasoning_*` / `answer_*` fields so stage files stay greppable and
//! diff-friendly.
//!
//! Unknown fields encountered on read are captured in each record's `extra`
//! map. Lenient readers keep them (and write them back verbatim); strict
//! readers reject them.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::think::{split_think, DEFAULT_THINK_DIRECTIVE};

/// Unknown fields preserved through a lenient read.
pub type ExtraFields = serde_json::Map<String, serde_json::Value>;

fn is_false(v: &bool) -> bool {
    !*v
}

/// Pipeline stage a record schema belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Raw,
    Enhanced,
    Rejected,
    Rag,
    Cot,
    Final,
    Dpo,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Raw => "raw",
            StageKind::Enhanced => "enhanced",
            StageKind::Rejected => "rejected",
            StageKind::Rag => "rag",
            StageKind::Cot => "cot",
            StageKind::Final => "final",
            StageKind::Dpo => "dpo",
        }
    }
}

impl std::fmt::Display for StageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One invariant violation found by validation, anchored to a field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every violated invariant of one record; empty iff the record is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for v in &self.violations {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

/// Common surface of every stage record: schema tag, id, preserved unknown
/// fields, and invariant validation.
pub trait StageRecord: Serialize + DeserializeOwned + Clone + PartialEq {
    const STAGE: StageKind;

    /// Record id, when the schema has one (the formatted triple does not).
    fn record_id(&self) -> Option<&str>;

    /// Unknown fields captured on read.
    fn extra_fields(&self) -> &ExtraFields;

    fn validate_into(&self, report: &mut ValidationReport);

    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.validate_into(&mut report);
        report
    }
}

/// A reasoning trace plus the final user-facing answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSample {
    pub reasoning: String,
    pub answer: String,
}

impl CompositeSample {
    pub fn new(reasoning: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            reasoning: reasoning.into(),
            answer: answer.into(),
        }
    }
}

/// Stage-0 input: one raw domain question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQuestion {
    pub id: String,
    pub q_raw: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl RawQuestion {
    pub fn new(id: impl Into<String>, q_raw: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            q_raw: q_raw.into(),
            extra: ExtraFields::new(),
        }
    }
}

impl StageRecord for RawQuestion {
    const STAGE: StageKind = StageKind::Raw;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.id.is_empty() {
            report.push("id", "must not be empty");
        }
        if self.q_raw.is_empty() {
            report.push("q_raw", "must not be empty");
        }
    }
}

/// Stage-1 output: the raw question plus its rewritten form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedRecord {
    pub id: String,
    pub q_raw: String,
    pub q_enhanced: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl EnhancedRecord {
    pub fn from_raw(raw: &RawQuestion, q_enhanced: impl Into<String>) -> Self {
        Self {
            id: raw.id.clone(),
            q_raw: raw.q_raw.clone(),
            q_enhanced: q_enhanced.into(),
            extra: raw.extra.clone(),
        }
    }
}

impl StageRecord for EnhancedRecord {
    const STAGE: StageKind = StageKind::Enhanced;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.id.is_empty() {
            report.push("id", "must not be empty");
        }
        if self.q_raw.is_empty() {
            report.push("q_raw", "must not be empty");
        }
        if self.q_enhanced.is_empty() {
            report.push("q_enhanced", "must not be empty");
        }
    }
}

/// Stage-2 output: adds the rejected sample `(reasoning_l, answer_l)`.
///
/// `missing_trace` marks records whose generator produced no usable
/// reasoning; only then may `reasoning_l` be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub id: String,
    pub q_raw: String,
    pub q_enhanced: String,
    pub reasoning_l: String,
    pub answer_l: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing_trace: bool,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl RejectedRecord {
    pub fn from_enhanced(rec: &EnhancedRecord, y_l: CompositeSample, missing_trace: bool) -> Self {
        Self {
            id: rec.id.clone(),
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            reasoning_l: y_l.reasoning,
            answer_l: y_l.answer,
            missing_trace,
            extra: rec.extra.clone(),
        }
    }

    pub fn y_l(&self) -> CompositeSample {
        CompositeSample::new(self.reasoning_l.clone(), self.answer_l.clone())
    }
}

impl StageRecord for RejectedRecord {
    const STAGE: StageKind = StageKind::Rejected;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.id.is_empty() {
            report.push("id", "must not be empty");
        }
        if self.q_raw.is_empty() {
            report.push("q_raw", "must not be empty");
        }
        if self.q_enhanced.is_empty() {
            report.push("q_enhanced", "must not be empty");
        }
        if self.answer_l.is_empty() {
            report.push("answer_l", "must not be empty");
        }
        if self.reasoning_l.is_empty() && !self.missing_trace {
            report.push("reasoning_l", "empty without missing_trace flag");
        }
    }
}

/// Stage-3 output: adds the integrated external knowledge.
///
/// `retrieval_empty` marks records the retriever returned nothing for; only
/// then may `rag_content` be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagRecord {
    pub id: String,
    pub q_raw: String,
    pub q_enhanced: String,
    pub reasoning_l: String,
    pub answer_l: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing_trace: bool,
    pub rag_content: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub retrieval_empty: bool,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl RagRecord {
    pub fn from_rejected(
        rec: &RejectedRecord,
        rag_content: impl Into<String>,
        retrieval_empty: bool,
    ) -> Self {
        Self {
            id: rec.id.clone(),
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            reasoning_l: rec.reasoning_l.clone(),
            answer_l: rec.answer_l.clone(),
            missing_trace: rec.missing_trace,
            rag_content: rag_content.into(),
            retrieval_empty,
            extra: rec.extra.clone(),
        }
    }

    pub fn y_l(&self) -> CompositeSample {
        CompositeSample::new(self.reasoning_l.clone(), self.answer_l.clone())
    }
}

impl StageRecord for RagRecord {
    const STAGE: StageKind = StageKind::Rag;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.id.is_empty() {
            report.push("id", "must not be empty");
        }
        if self.q_raw.is_empty() {
            report.push("q_raw", "must not be empty");
        }
        if self.q_enhanced.is_empty() {
            report.push("q_enhanced", "must not be empty");
        }
        if self.answer_l.is_empty() {
            report.push("answer_l", "must not be empty");
        }
        if self.reasoning_l.is_empty() && !self.missing_trace {
            report.push("reasoning_l", "empty without missing_trace flag");
        }
        if self.rag_content.is_empty() && !self.retrieval_empty {
            report.push("rag_content", "empty without retrieval_empty flag");
        }
    }
}

/// Intermediate sub-stage output: a RAG record plus the preferred reasoning
/// chain, before the preferred answer exists. Produced by the `prefer-cot`
/// command so the two preferred-sample sub-steps can be run separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    pub id: String,
    pub q_raw: String,
    pub q_enhanced: String,
    pub reasoning_l: String,
    pub answer_l: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing_trace: bool,
    pub rag_content: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub retrieval_empty: bool,
    pub reasoning_w: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl CotRecord {
    pub fn from_rag(rec: &RagRecord, reasoning_w: impl Into<String>) -> Self {
        Self {
            id: rec.id.clone(),
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            reasoning_l: rec.reasoning_l.clone(),
            answer_l: rec.answer_l.clone(),
            missing_trace: rec.missing_trace,
            rag_content: rec.rag_content.clone(),
            retrieval_empty: rec.retrieval_empty,
            reasoning_w: reasoning_w.into(),
            extra: rec.extra.clone(),
        }
    }

    pub fn rag(&self) -> RagRecord {
        RagRecord {
            id: self.id.clone(),
            q_raw: self.q_raw.clone(),
            q_enhanced: self.q_enhanced.clone(),
            reasoning_l: self.reasoning_l.clone(),
            answer_l: self.answer_l.clone(),
            missing_trace: self.missing_trace,
            rag_content: self.rag_content.clone(),
            retrieval_empty: self.retrieval_empty,
            extra: self.extra.clone(),
        }
    }
}

impl StageRecord for CotRecord {
    const STAGE: StageKind = StageKind::Cot;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        self.rag().validate_into(report);
        if self.reasoning_w.is_empty() {
            report.push("reasoning_w", "must not be empty");
        }
    }
}

/// Stage-4 output: the complete preference record with both samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub id: String,
    pub q_raw: String,
    pub q_enhanced: String,
    pub reasoning_l: String,
    pub answer_l: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing_trace: bool,
    pub rag_content: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub retrieval_empty: bool,
    pub reasoning_w: String,
    pub answer_w: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl FinalRecord {
    pub fn from_rag(rec: &RagRecord, y_w: CompositeSample) -> Self {
        Self {
            id: rec.id.clone(),
            q_raw: rec.q_raw.clone(),
            q_enhanced: rec.q_enhanced.clone(),
            reasoning_l: rec.reasoning_l.clone(),
            answer_l: rec.answer_l.clone(),
            missing_trace: rec.missing_trace,
            rag_content: rec.rag_content.clone(),
            retrieval_empty: rec.retrieval_empty,
            reasoning_w: y_w.reasoning,
            answer_w: y_w.answer,
            extra: rec.extra.clone(),
        }
    }

    pub fn y_l(&self) -> CompositeSample {
        CompositeSample::new(self.reasoning_l.clone(), self.answer_l.clone())
    }

    pub fn y_w(&self) -> CompositeSample {
        CompositeSample::new(self.reasoning_w.clone(), self.answer_w.clone())
    }
}

impl StageRecord for FinalRecord {
    const STAGE: StageKind = StageKind::Final;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.id.is_empty() {
            report.push("id", "must not be empty");
        }
        if self.q_raw.is_empty() {
            report.push("q_raw", "must not be empty");
        }
        if self.q_enhanced.is_empty() {
            report.push("q_enhanced", "must not be empty");
        }
        if self.answer_l.is_empty() {
            report.push("answer_l", "must not be empty");
        }
        if self.reasoning_l.is_empty() && !self.missing_trace {
            report.push("reasoning_l", "empty without missing_trace flag");
        }
        if self.rag_content.is_empty() && !self.retrieval_empty {
            report.push("rag_content", "empty without retrieval_empty flag");
        }
        // The preferred reasoning chain is mandatory, unlike the rejected one.
        if self.reasoning_w.is_empty() {
            report.push("reasoning_w", "must not be empty");
        }
        if self.answer_w.is_empty() {
            report.push("answer_w", "must not be empty");
        }
    }
}

/// Stage-5 output: one training unit in `(prompt, chosen, rejected)` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoTriple {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl DpoTriple {
    pub fn new(
        prompt: impl Into<String>,
        chosen: impl Into<String>,
        rejected: impl Into<String>,
    ) -> Self {
        Self {
            prompt: prompt.into(),
            chosen: chosen.into(),
            rejected: rejected.into(),
            extra: ExtraFields::new(),
        }
    }

    /// Validates against an explicit think directive instead of the default.
    pub fn validate_with_directive(&self, directive: &str) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.validate_directive_into(directive, &mut report);
        report
    }

    fn validate_directive_into(&self, directive: &str, report: &mut ValidationReport) {
        if self.prompt.is_empty() {
            report.push("prompt", "must not be empty");
        } else if !directive.is_empty() && !self.prompt.ends_with(directive) {
            report.push(
                "prompt",
                format!("does not end with think directive {directive:?}"),
            );
        }
        for (field, text) in [("chosen", &self.chosen), ("rejected", &self.rejected)] {
            if let Err(err) = split_think(text) {
                report.push(field, err.to_string());
            }
        }
    }
}

impl StageRecord for DpoTriple {
    const STAGE: StageKind = StageKind::Dpo;

    fn record_id(&self) -> Option<&str> {
        None
    }

    fn extra_fields(&self) -> &ExtraFields {
        &self.extra
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        self.validate_directive_into(DEFAULT_THINK_DIRECTIVE, report);
    }
}

/// Checks id uniqueness across a record slice; returns the first duplicate.
pub fn find_duplicate_id<T: StageRecord>(records: &[T]) -> Option<String> {
    let mut seen = std::collections::HashSet::new();
    for rec in records {
        if let Some(id) = rec.record_id() {
            if !seen.insert(id.to_string()) {
                return Some(id.to_string());
            }
        }
    }
    None
}
