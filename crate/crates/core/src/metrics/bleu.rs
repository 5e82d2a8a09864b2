//! Corpus-free sentence BLEU with clipped n-gram precisions and a brevity
//! penalty.
//!
//! The default is the original unsmoothed definition: any zero clipped
//! precision zeroes the whole score. Add-one smoothing (applied to orders
//! two and up) is opt-in.

use super::rouge::ngram_counts;
use super::text::TokenizedText;
use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// `(clipped + 1) / (total + 1)` for n >= 2.
    AddOne,
}

/// Clipped precision of order `n` against the per-gram maximum over all
/// references. Returns `(clipped, total)` candidate gram counts.
fn clipped_counts(cand: &TokenizedText, refs: &[TokenizedText], n: usize) -> (usize, usize) {
    let cand_counts = ngram_counts(&cand.tokens, n);
    let total: usize = cand_counts.values().sum();
    let mut clipped = 0usize;
    for (gram, count) in &cand_counts {
        let best_ref = refs
            .iter()
            .map(|r| *ngram_counts(&r.tokens, n).get(gram).unwrap_or(&0))
            .max()
            .unwrap_or(0);
        clipped += (*count).min(best_ref);
    }
    (clipped, total)
}

/// Reference length closest to the candidate length (ties go to the
/// shorter reference).
fn closest_ref_len(cand_len: usize, refs: &[TokenizedText]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|len| (cand_len.abs_diff(*len), *len))
        .unwrap_or(0)
}

pub fn bleu_with(
    cand: &TokenizedText,
    refs: &[TokenizedText],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<f64, MetricsError> {
    if refs.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    for r in refs {
        if r.tokenizer_id != cand.tokenizer_id {
            return Err(MetricsError::TokenizerMismatch {
                candidate: cand.tokenizer_id,
                reference: r.tokenizer_id,
            });
        }
    }
    if max_n < 1 {
        return Err(MetricsError::InvalidNgramOrder { n: max_n });
    }
    if cand.is_empty() {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for n in 1..=max_n {
        let (clipped, total) = clipped_counts(cand, refs, n);
        let precision = match smoothing {
            Smoothing::AddOne if n >= 2 && total > 0 => {
                (clipped + 1) as f64 / (total + 1) as f64
            }
            _ => {
                if total == 0 || clipped == 0 {
                    return Ok(0.0);
                }
                clipped as f64 / total as f64
            }
        };
        log_precision_sum += precision.ln();
    }

    let c = cand.len() as f64;
    let r = closest_ref_len(cand.len(), refs) as f64;
    let brevity_penalty = (1.0 - r / c).min(0.0).exp();
    Ok(brevity_penalty * (log_precision_sum / max_n as f64).exp())
}

/// Unsmoothed BLEU with uniform weights over orders `1..=max_n`.
pub fn bleu(cand: &TokenizedText, refs: &[TokenizedText], max_n: usize) -> Result<f64, MetricsError> {
    bleu_with(cand, refs, max_n, Smoothing::None)
}
