//! ROUGE-N (clipped n-gram overlap) and ROUGE-L (longest common
//! subsequence), built from scratch.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::TokenizedText;
use super::MetricsError;

/// Precision / recall / F1 triple, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    /// F1 is the plain harmonic mean; zero when precision + recall is zero.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn check_same_tokenizer(cand: &TokenizedText, reference: &TokenizedText) -> Result<(), MetricsError> {
    if cand.tokenizer_id != reference.tokenizer_id {
        return Err(MetricsError::TokenizerMismatch {
            candidate: cand.tokenizer_id,
            reference: reference.tokenizer_id,
        });
    }
    Ok(())
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap. Empty n-gram sets on either side score zero.
pub fn rouge_n(
    cand: &TokenizedText,
    reference: &TokenizedText,
    n: usize,
) -> Result<PrfScore, MetricsError> {
    check_same_tokenizer(cand, reference)?;
    if n < 1 {
        return Err(MetricsError::InvalidNgramOrder { n });
    }
    let cand_counts = ngram_counts(&cand.tokens, n);
    let ref_counts = ngram_counts(&reference.tokens, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return Ok(PrfScore::default());
    }
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, count)| count.min(ref_counts.get(gram).unwrap_or(&0)))
        .sum();
    Ok(PrfScore::from_pr(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    ))
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // One-row dynamic program over b.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence overlap: precision against the candidate
/// length, recall against the reference length.
pub fn rouge_l(cand: &TokenizedText, reference: &TokenizedText) -> Result<PrfScore, MetricsError> {
    check_same_tokenizer(cand, reference)?;
    if cand.is_empty() || reference.is_empty() {
        return Ok(PrfScore::default());
    }
    let lcs = lcs_len(&cand.tokens, &reference.tokens) as f64;
    Ok(PrfScore::from_pr(
        lcs / cand.len() as f64,
        lcs / reference.len() as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::text::{tokenize, TokenizerId};
    use proptest::prelude::*;

    fn ws(text: &str) -> TokenizedText {
        tokenize(text, TokenizerId::Whitespace)
    }

    #[test]
    fn identical_inputs_score_one() {
        let t = ws("a b c");
        let score = rouge_n(&t, &t, 1).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
        let score = rouge_l(&t, &t).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unigram_overlap_half() {
        let score = rouge_n(&ws("a b"), &ws("b c"), 1).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn order_larger_than_inputs_scores_zero() {
        let score = rouge_n(&ws("a b"), &ws("b c"), 3).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn clipping_limits_repeated_grams() {
        // "the" appears 4 times in the candidate but once in the reference.
        let score = rouge_n(&ws("the the the the"), &ws("the cat"), 1).unwrap();
        assert_eq!(score.precision, 0.25);
        assert_eq!(score.recall, 0.5);
    }

    #[test]
    fn lcs_example() {
        let score = rouge_l(&ws("a b c d"), &ws("a c d")).unwrap();
        assert_eq!(score.precision, 0.75);
        assert_eq!(score.recall, 1.0);
        assert!((score.f1 - 0.857_142_857_142_857_1).abs() < 1e-12);
    }

    #[test]
    fn disjoint_inputs_score_zero() {
        let score = rouge_l(&ws("a b"), &ws("c d")).unwrap();
        assert_eq!((score.precision, score.recall, score.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn tokenizer_mismatch_is_a_domain_error() {
        let cand = tokenize("abc", TokenizerId::UnicodeChar);
        let reference = ws("abc");
        assert!(matches!(
            rouge_n(&cand, &reference, 1),
            Err(MetricsError::TokenizerMismatch { .. })
        ));
        assert!(rouge_l(&cand, &reference).is_err());
    }

    proptest! {
        /// Unigram precision/recall are bag-of-words: shuffling the
        /// candidate changes nothing.
        #[test]
        fn rouge_1_is_permutation_invariant(
            tokens in proptest::collection::vec("[a-e]", 1..12),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cand = TokenizedText::from_tokens(tokens.clone(), TokenizerId::Whitespace);
            let reference = ws("a b c a");
            let base = rouge_n(&cand, &reference, 1).unwrap();

            let mut shuffled = tokens;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled = TokenizedText::from_tokens(shuffled, TokenizerId::Whitespace);
            prop_assert_eq!(base, rouge_n(&shuffled, &reference, 1).unwrap());
        }

        /// Appending a token that occurs in the reference never lowers
        /// unigram recall.
        #[test]
        fn adding_reference_token_never_decreases_recall(
            tokens in proptest::collection::vec("[a-e]", 0..12),
            extra in "[a-e]",
        ) {
            let reference = ws("a b c d e");
            let before = rouge_n(
                &TokenizedText::from_tokens(tokens.clone(), TokenizerId::Whitespace),
                &reference,
                1,
            )
            .unwrap();
            let mut extended = tokens;
            extended.push(extra);
            let after = rouge_n(
                &TokenizedText::from_tokens(extended, TokenizerId::Whitespace),
                &reference,
                1,
            )
            .unwrap();
            prop_assert!(after.recall >= before.recall);
        }
    }
}
