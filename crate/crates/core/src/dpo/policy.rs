//! Tabular bigram softmax policy.
//!
//! The policy is a logits matrix of shape `(V+1) x V`: one row per possible
//! previous token (all symbols, with the begin-of-sequence sentinel first)
//! and one column per possible next token (every symbol except BOS). Each
//! row defines the next-token distribution as its softmax. This is the
//! smallest policy class on which sequence log-probabilities and preference
//! gradients are exactly computable in closed form.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DpoError;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub type TokenId = usize;

/// Ordered symbol set: `[BOS, EOS, UNK, tokens...]`. Token/index mapping is
/// a bijection by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: std::collections::HashMap<String, TokenId>,
}

pub const BOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;

impl Vocab {
    /// Builds a vocabulary from plain tokens (sentinels are added first).
    /// Requires at least two distinct non-sentinel tokens.
    pub fn new<I, S>(tokens: I) -> Result<Self, DpoError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut symbols = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        let mut index: std::collections::HashMap<String, TokenId> = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        for token in tokens {
            let token = token.into();
            if index.contains_key(&token) {
                return Err(DpoError::DuplicateToken { token });
            }
            index.insert(token.clone(), symbols.len());
            symbols.push(token);
        }
        if symbols.len() < 3 + 2 {
            return Err(DpoError::VocabTooSmall {
                tokens: symbols.len() - 3,
            });
        }
        Ok(Self { symbols, index })
    }

    /// Total symbol count including sentinels.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees sentinels plus two tokens
    }

    /// Number of possible next tokens (everything but BOS).
    pub fn next_token_count(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn token_id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of the token, or the UNK sentinel for out-of-vocabulary tokens.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.token_id(token).unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }
}

/// The trainable policy: raw logits, shape `(V+1) x V`.
///
/// Logits are unconstrained; probabilities come from a per-row softmax and
/// always sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    pub logits: Array2<f64>,
}

impl ToyPolicy {
    /// Uniform policy (all-zero logits).
    pub fn uniform(vocab: &Vocab) -> Self {
        let next = vocab.next_token_count();
        Self {
            logits: Array2::zeros((next + 1, next)),
        }
    }

    /// Deterministic random policy with logits uniform in `[-scale, scale)`.
    pub fn random(vocab: &Vocab, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next = vocab.next_token_count();
        let logits = Array2::from_shape_fn((next + 1, next), |_| {
            (rng.gen::<f64>() * 2.0 - 1.0) * scale
        });
        Self { logits }
    }

    /// Rows of the logits matrix: `V+1` conditioning contexts.
    pub fn context_count(&self) -> usize {
        self.logits.nrows()
    }

    /// Columns: `V` next-token candidates.
    pub fn next_token_count(&self) -> usize {
        self.logits.ncols()
    }

    /// Column index of a next-token id (ids shift by one because BOS has a
    /// row but no column).
    pub fn column_of(&self, token: TokenId) -> Result<usize, DpoError> {
        if token == BOS_ID || token >= self.context_count() {
            return Err(DpoError::TokenOutOfRange {
                token,
                contexts: self.context_count(),
            });
        }
        Ok(token - 1)
    }

    fn check_context(&self, token: TokenId) -> Result<(), DpoError> {
        if token >= self.context_count() {
            return Err(DpoError::TokenOutOfRange {
                token,
                contexts: self.context_count(),
            });
        }
        Ok(())
    }

    /// Stable log-softmax of one conditioning row.
    pub fn row_log_probs(&self, prev: TokenId) -> Result<Vec<f64>, DpoError> {
        self.check_context(prev)?;
        let row = self.logits.row(prev);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        Ok(row.iter().map(|x| x - max - log_sum).collect())
    }

    /// Softmax probabilities of one conditioning row.
    pub fn row_probs(&self, prev: TokenId) -> Result<Vec<f64>, DpoError> {
        Ok(self.row_log_probs(prev)?.iter().map(|lp| lp.exp()).collect())
    }
}

/// One preference example at token level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceInstance {
    pub prompt: Vec<TokenId>,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
}

impl PreferenceInstance {
    pub fn new(prompt: Vec<TokenId>, chosen: Vec<TokenId>, rejected: Vec<TokenId>) -> Self {
        Self {
            prompt,
            chosen,
            rejected,
        }
    }

    /// The same instance with chosen and rejected swapped.
    pub fn swapped(&self) -> Self {
        Self {
            prompt: self.prompt.clone(),
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
        }
    }

    /// Checks token bounds against a policy and that the two responses
    /// differ as sequences.
    pub fn validate_for(&self, policy: &ToyPolicy) -> Result<(), DpoError> {
        if self.chosen == self.rejected {
            return Err(DpoError::IdenticalResponses);
        }
        for &token in &self.prompt {
            if token >= policy.context_count() {
                return Err(DpoError::TokenOutOfRange {
                    token,
                    contexts: policy.context_count(),
                });
            }
        }
        for &token in self.chosen.iter().chain(&self.rejected) {
            policy.column_of(token)?;
        }
        Ok(())
    }
}
