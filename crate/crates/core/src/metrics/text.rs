//! Tokenization for the text-overlap metrics.
//!
//! Nothing in the evaluation protocol fixes a tokenizer, and the reference
//! answers may be in languages without word boundaries, so both a
//! whitespace and a per-character mode exist. The character mode keeps
//! every non-whitespace character as its own token.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerId {
    Whitespace,
    #[default]
    UnicodeChar,
}

impl std::fmt::Display for TokenizerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenizerId::Whitespace => f.write_str("whitespace"),
            TokenizerId::UnicodeChar => f.write_str("unicode_char"),
        }
    }
}

impl std::str::FromStr for TokenizerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(TokenizerId::Whitespace),
            "unicode_char" => Ok(TokenizerId::UnicodeChar),
            other => Err(format!("unknown tokenizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    pub tokenizer_id: TokenizerId,
}

impl TokenizedText {
    pub fn from_tokens<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        tokenizer_id: TokenizerId,
    ) -> Self {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
            tokenizer_id,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(text: &str, tokenizer_id: TokenizerId) -> TokenizedText {
    let tokens = match tokenizer_id {
        TokenizerId::Whitespace => text.split_whitespace().map(str::to_string).collect(),
        TokenizerId::UnicodeChar => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    };
    TokenizedText {
        tokens,
        tokenizer_id,
    }
}
