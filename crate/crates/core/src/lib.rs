//! Building blocks for constructing binary preference datasets and for
//! checking the alignment math behind them at desk scale.
//!
//! The crate has five subsystems:
//!
//! - [`data`] — record schemas for every pipeline stage, think-tag encoding,
//!   and lossless JSONL persistence.
//! - [`provider`] — chat-completion and retrieval clients with retry/backoff
//!   and a concurrency cap, plus a deterministic offline mock.
//! - [`pipeline`] — the five-stage dataset construction pipeline with
//!   per-record resumability and fault quarantine.
//! - [`dpo`] — a tabular bigram softmax policy with exact log-probabilities,
//!   the preference loss, analytic gradients, and a deterministic trainer.
//! - [`metrics`] — ROUGE-1/2/L and BLEU from scratch, an LLM-judge harness,
//!   and per-model report aggregation.

pub mod data;
pub mod dpo;
pub mod metrics;
pub mod pipeline;
pub mod provider;
