//! Desk-scale preference optimization on a tabular bigram policy: exact
//! sequence log-probabilities, the log-sigmoid preference loss, analytic
//! gradients, and a deterministic full-batch trainer.

mod loss;
mod policy;
mod synth;
mod tokenize;
mod train;

pub use loss::{dpo_grad, dpo_loss, implicit_reward_margin, sequence_logprob};
pub use policy::{
    PreferenceInstance, TokenId, ToyPolicy, Vocab, BOS, BOS_ID, EOS, EOS_ID, UNK, UNK_ID,
};
pub use synth::{synthetic_dataset, synthetic_vocab};
pub use tokenize::{build_vocab, dataset_from_triples, instances_from_triples};
pub use train::{evaluate, train, write_history_csv, DatasetStats, StepStats, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpoError {
    #[error("token id {token} out of range for {contexts} contexts")]
    TokenOutOfRange { token: usize, contexts: usize },
    #[error("duplicate token {token:?} in vocabulary")]
    DuplicateToken { token: String },
    #[error("vocabulary needs at least 2 plain tokens, got {tokens}")]
    VocabTooSmall { tokens: usize },
    #[error("chosen and rejected responses are identical")]
    IdenticalResponses,
    #[error("policies have different shapes")]
    ShapeMismatch,
    #[error("non-finite value in loss computation")]
    NonFinite,
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("csv error: {0}")]
    Csv(String),
}
