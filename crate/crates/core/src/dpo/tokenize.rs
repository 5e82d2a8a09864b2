//! Whitespace tokenization of training triples over a capped vocabulary.

use std::collections::HashMap;

use crate::data::DpoTriple;

use super::policy::{PreferenceInstance, Vocab};
use super::DpoError;

/// Builds a frequency-capped vocabulary from texts. The `cap` most frequent
/// tokens survive (ties broken lexicographically); everything else maps to
/// the UNK sentinel later.
pub fn build_vocab<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    cap: usize,
) -> Result<Vocab, DpoError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for text in texts {
        for token in text.split_whitespace() {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Vocab::new(ranked.into_iter().map(|(token, _)| token.to_string()))
}

/// Token-level view of the triples. Triples whose chosen and rejected
/// collapse to the same id sequence (e.g. through UNK mapping) are dropped;
/// the count of dropped triples is returned alongside.
pub fn instances_from_triples(
    triples: &[DpoTriple],
    vocab: &Vocab,
) -> (Vec<PreferenceInstance>, usize) {
    let encode = |text: &str| -> Vec<usize> {
        text.split_whitespace()
            .map(|token| vocab.id_or_unk(token))
            .collect()
    };
    let mut instances = Vec::with_capacity(triples.len());
    let mut dropped = 0;
    for triple in triples {
        let inst = PreferenceInstance::new(
            encode(&triple.prompt),
            encode(&triple.chosen),
            encode(&triple.rejected),
        );
        if inst.chosen == inst.rejected || inst.chosen.is_empty() || inst.rejected.is_empty() {
            dropped += 1;
        } else {
            instances.push(inst);
        }
    }
    (instances, dropped)
}

/// Convenience: vocabulary plus instances straight from triples.
pub fn dataset_from_triples(
    triples: &[DpoTriple],
    vocab_cap: usize,
) -> Result<(Vocab, Vec<PreferenceInstance>, usize), DpoError> {
    let texts = triples.iter().flat_map(|t| {
        [t.prompt.as_str(), t.chosen.as_str(), t.rejected.as_str()]
    });
    let vocab = build_vocab(texts, vocab_cap)?;
    let (instances, dropped) = instances_from_triples(triples, &vocab);
    Ok((vocab, instances, dropped))
}
