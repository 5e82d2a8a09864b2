//! Record schemas, think-tag encoding, and JSONL persistence.

mod jsonl;
mod records;
mod think;

pub use jsonl::{
    read_stage_file, read_stage_file_resume, write_stage_file, ReadMode, ResumeRead, StageAppender,
};
pub use records::{
    find_duplicate_id, CompositeSample, CotRecord, DpoTriple, EnhancedRecord, ExtraFields,
    FinalRecord, RagRecord, RawQuestion, RejectedRecord, StageKind, StageRecord, ValidationReport,
    Violation,
};
pub use think::{
    split_think, wrap_think, ThinkError, DEFAULT_THINK_DIRECTIVE, THINK_CLOSE, THINK_OPEN,
};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: invalid UTF-8")]
    Encoding { line: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown fields {fields:?}")]
    UnknownFields { line: usize, fields: Vec<String> },
    #[error("record {index} invalid: {report}")]
    InvalidRecord {
        index: usize,
        report: ValidationReport,
    },
    #[error(transparent)]
    Think(#[from] ThinkError),
    #[error("duplicate record id {id:?}")]
    DuplicateId { id: String },
}
