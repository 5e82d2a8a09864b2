//! Seeded synthetic preference datasets for exercising the trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{PreferenceInstance, TokenId, Vocab};

/// First id of the plain (non-sentinel) tokens.
const FIRST_PLAIN: TokenId = 3;

/// A vocabulary of `n` plain tokens `t0..t{n-1}`.
pub fn synthetic_vocab(n: usize) -> Vocab {
    Vocab::new((0..n).map(|i| format!("t{i}"))).expect("n >= 2 synthetic tokens")
}

/// `n` random preference instances over the plain tokens of `vocab`,
/// deterministic in `seed`. Chosen and rejected always differ.
pub fn synthetic_dataset(
    vocab: &Vocab,
    n: usize,
    seed: u64,
    prompt_len: usize,
    response_len: usize,
) -> Vec<PreferenceInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plain = FIRST_PLAIN..vocab.len();
    let draw_seq = |rng: &mut ChaCha8Rng, len: usize| -> Vec<TokenId> {
        (0..len).map(|_| rng.gen_range(plain.clone())).collect()
    };
    (0..n)
        .map(|_| {
            let prompt = draw_seq(&mut rng, prompt_len);
            let chosen = draw_seq(&mut rng, response_len.max(1));
            let rejected = loop {
                let candidate = draw_seq(&mut rng, response_len.max(1));
                if candidate != chosen {
                    break candidate;
                }
            };
            PreferenceInstance::new(prompt, chosen, rejected)
        })
        .collect()
}
