//! Five-stage preference-dataset construction: question enhancement,
//! rejected-sample generation, knowledge retrieval, preferred-sample
//! generation, and training-triple formatting.

mod config;
mod run;
mod stages;
mod summary;
mod template;

pub use config::{
    EmptyRetrievalPolicy, GenParams, PipelineConfig, PromptSource, ProviderBinding, ProviderKind,
    ProvidersConfig, RetrievalBinding, StageGenerators,
};
pub use run::{
    run_pipeline, run_pipeline_with, RunOptions, StagePaths, FAILED_FILE_NAME, STAGE_FILE_NAMES,
};
pub use stages::{FailedEntry, PipelineCtx, StageOutcome};
pub use summary::{RunSummary, StageCounts};
pub use template::{required_placeholders, PromptTemplate, TemplateSet, PLACEHOLDER_NAMES};

use std::path::PathBuf;
use thiserror::Error;

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(
        "output directory {dir} already contains stage files; pass resume to continue into it"
    )]
    OutputExists { dir: PathBuf },
}
