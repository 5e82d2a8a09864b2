//! Think-tag encoding for chosen/rejected responses.
//!
//! A formatted response is the reasoning trace wrapped in a tag block,
//! followed by the user-facing answer:
//!
//! ```text
//! <think>
//! {reasoning}
//! </think>
//!
//! {answer}
//! ```
//!
//! The format is bit-exact: `split_think(wrap_think(r, a)) == (r, a)` for any
//! `r`/`a` that do not themselves contain the tag literals.

use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

/// Suffix appended to prompts to switch the target model into thinking mode.
pub const DEFAULT_THINK_DIRECTIVE: &str = " /think";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThinkError {
    #[error("answer must not be empty")]
    EmptyAnswer,
    #[error("no think block found (offset 0)")]
    MissingOpenTag,
    #[error("text before think block (offset {offset})")]
    TextBeforeBlock { offset: usize },
    #[error("unterminated think block (offset {offset})")]
    Unterminated { offset: usize },
    #[error("more than one think block (offset {offset})")]
    MultipleBlocks { offset: usize },
}

/// Wraps a reasoning trace and an answer into the tagged response format.
///
/// The reasoning may be empty (a missing trace still yields a well-formed
/// block); the answer may not.
pub fn wrap_think(reasoning: &str, answer: &str) -> Result<String, ThinkError> {
    if answer.is_empty() {
        return Err(ThinkError::EmptyAnswer);
    }
    Ok(format!(
        "{THINK_OPEN}\n{reasoning}\n{THINK_CLOSE}\n\n{answer}"
    ))
}

/// Inverse of [`wrap_think`]: splits a tagged response into
/// `(reasoning, answer)`.
///
/// The input must contain exactly one think block, at the start of the text.
/// Exactly one layer of the separators added by [`wrap_think`] is stripped,
/// so the round-trip is lossless even when the reasoning itself begins or
/// ends with newlines. Inputs produced by other writers are accepted as long
/// as they observe the same tag structure.
pub fn split_think(text: &str) -> Result<(String, String), ThinkError> {
    let open = text.find(THINK_OPEN).ok_or(ThinkError::MissingOpenTag)?;
    if open != 0 {
        return Err(ThinkError::TextBeforeBlock { offset: open });
    }
    let body_start = THINK_OPEN.len();
    let close_rel = text[body_start..]
        .find(THINK_CLOSE)
        .ok_or(ThinkError::Unterminated { offset: 0 })?;
    let body = &text[body_start..body_start + close_rel];
    if let Some(nested) = body.find(THINK_OPEN) {
        return Err(ThinkError::MultipleBlocks {
            offset: body_start + nested,
        });
    }
    let after = body_start + close_rel + THINK_CLOSE.len();
    let rest = &text[after..];
    if let Some(extra) = rest.find(THINK_OPEN).or_else(|| rest.find(THINK_CLOSE)) {
        return Err(ThinkError::MultipleBlocks {
            offset: after + extra,
        });
    }

    let reasoning = body.strip_prefix('\n').unwrap_or(body);
    let reasoning = reasoning.strip_suffix('\n').unwrap_or(reasoning);
    let answer = rest
        .strip_prefix("\n\n")
        .or_else(|| rest.strip_prefix('\n'))
        .unwrap_or(rest);
    if answer.is_empty() {
        return Err(ThinkError::EmptyAnswer);
    }
    Ok((reasoning.to_string(), answer.to_string()))
}
