//! The preference loss, its margin, and the analytic gradient.
//!
//! For a preference instance `(q, y_w, y_l)` and policies `theta` / `ref`,
//! the implicit reward margin is
//!
//! ```text
//! m = beta * ((log p_theta(y_w|q) - log p_ref(y_w|q))
//!           - (log p_theta(y_l|q) - log p_ref(y_l|q)))
//! ```
//!
//! and the loss is `-ln sigmoid(m)`, evaluated as `softplus(-m)` so the
//! math stays in log space for any margin magnitude.

use ndarray::Array2;

use super::policy::{PreferenceInstance, TokenId, ToyPolicy, BOS_ID};
use super::DpoError;

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 33.0 {
        x
    } else if x < -33.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum of next-token log-probabilities of `y` conditioned on the prompt.
///
/// The conditioning chain starts at the last prompt token (BOS for an empty
/// prompt); prompt tokens themselves are not scored. Always `<= 0`; an empty
/// `y` scores exactly 0.
pub fn sequence_logprob(
    policy: &ToyPolicy,
    prompt: &[TokenId],
    y: &[TokenId],
) -> Result<f64, DpoError> {
    let mut prev = *prompt.last().unwrap_or(&BOS_ID);
    if prev >= policy.context_count() {
        return Err(DpoError::TokenOutOfRange {
            token: prev,
            contexts: policy.context_count(),
        });
    }
    let mut total = 0.0;
    for &token in y {
        let col = policy.column_of(token)?;
        total += policy.row_log_probs(prev)?[col];
        prev = token;
    }
    Ok(total)
}

fn delta(
    theta: &ToyPolicy,
    reference: &ToyPolicy,
    prompt: &[TokenId],
    y: &[TokenId],
) -> Result<f64, DpoError> {
    Ok(sequence_logprob(theta, prompt, y)? - sequence_logprob(reference, prompt, y)?)
}

/// The implicit reward margin `m`.
pub fn implicit_reward_margin(
    theta: &ToyPolicy,
    reference: &ToyPolicy,
    inst: &PreferenceInstance,
    beta: f64,
) -> Result<f64, DpoError> {
    if theta.logits.dim() != reference.logits.dim() {
        return Err(DpoError::ShapeMismatch);
    }
    let delta_w = delta(theta, reference, &inst.prompt, &inst.chosen)?;
    let delta_l = delta(theta, reference, &inst.prompt, &inst.rejected)?;
    let margin = beta * (delta_w - delta_l);
    if !margin.is_finite() {
        return Err(DpoError::NonFinite);
    }
    Ok(margin)
}

/// The per-instance loss `-ln sigmoid(m)`: strictly positive, strictly
/// decreasing in the margin, exactly `ln 2` at `m = 0`.
pub fn dpo_loss(
    theta: &ToyPolicy,
    reference: &ToyPolicy,
    inst: &PreferenceInstance,
    beta: f64,
) -> Result<f64, DpoError> {
    let loss = softplus(-implicit_reward_margin(theta, reference, inst, beta)?);
    if !loss.is_finite() {
        return Err(DpoError::NonFinite);
    }
    Ok(loss)
}

/// Adds `coeff * d log p(y|prompt) / d logits` into `grad`. For one visited
/// transition the row derivative is `one_hot(next) - softmax(row)`.
fn accumulate_logprob_grad(
    policy: &ToyPolicy,
    prompt: &[TokenId],
    y: &[TokenId],
    coeff: f64,
    grad: &mut Array2<f64>,
) -> Result<(), DpoError> {
    let mut prev = *prompt.last().unwrap_or(&BOS_ID);
    for &token in y {
        let col = policy.column_of(token)?;
        let probs = policy.row_probs(prev)?;
        let mut row = grad.row_mut(prev);
        for (c, p) in probs.iter().enumerate() {
            let indicator = if c == col { 1.0 } else { 0.0 };
            row[c] += coeff * (indicator - p);
        }
        prev = token;
    }
    Ok(())
}

/// Analytic gradient of [`dpo_loss`] with respect to `theta`'s logits:
/// `-beta * sigmoid(-m) * (d log p(y_w) - d log p(y_l))`. Same shape as the
/// logits matrix.
pub fn dpo_grad(
    theta: &ToyPolicy,
    reference: &ToyPolicy,
    inst: &PreferenceInstance,
    beta: f64,
) -> Result<Array2<f64>, DpoError> {
    let margin = implicit_reward_margin(theta, reference, inst, beta)?;
    let coeff = beta * sigmoid(-margin);
    let mut grad = Array2::zeros(theta.logits.dim());
    accumulate_logprob_grad(theta, &inst.prompt, &inst.chosen, -coeff, &mut grad)?;
    accumulate_logprob_grad(theta, &inst.prompt, &inst.rejected, coeff, &mut grad)?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpo::policy::Vocab;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn vocab() -> Vocab {
        Vocab::new(["a", "b", "c"]).unwrap()
    }

    fn instance() -> PreferenceInstance {
        // Token ids: sentinels take 0..=2, plain tokens start at 3.
        PreferenceInstance::new(vec![3], vec![4, 5], vec![5, 3])
    }

    #[test]
    fn uniform_policy_scores_are_symmetric() {
        // Two plain tokens -> vocab of 4 non-BOS symbols is too big; build a
        // minimal vocab and check 3 * ln(1/V).
        let v = vocab();
        let policy = ToyPolicy::uniform(&v);
        let lp = sequence_logprob(&policy, &[], &[3, 4, 5]).unwrap();
        let expected = 3.0 * (1.0 / v.next_token_count() as f64).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_scores_zero() {
        let policy = ToyPolicy::uniform(&vocab());
        assert_eq!(sequence_logprob(&policy, &[3], &[]).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_policy_scores_zero_on_its_argmax_path() {
        let v = vocab();
        let mut policy = ToyPolicy::uniform(&v);
        // Push one column per row far above the others: effectively one-hot.
        let path = [3usize, 4, 5];
        let mut prev = BOS_ID;
        for &token in &path {
            policy.logits[(prev, token - 1)] = 500.0;
            prev = token;
        }
        let lp = sequence_logprob(&policy, &[], &path).unwrap();
        assert!(lp.abs() < 1e-12, "lp = {lp}");
        assert!(lp <= 0.0);
    }

    #[test]
    fn logprobs_are_never_positive() {
        let v = vocab();
        for seed in 0..50 {
            let policy = ToyPolicy::random(&v, seed, 4.0);
            let lp = sequence_logprob(&policy, &[3], &[4, 5, 4]).unwrap();
            assert!(lp <= 0.0);
        }
    }

    #[test]
    fn out_of_vocab_token_is_a_domain_error() {
        let policy = ToyPolicy::uniform(&vocab());
        assert!(matches!(
            sequence_logprob(&policy, &[], &[99]),
            Err(DpoError::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn identical_policies_give_ln2_loss() {
        let v = vocab();
        for seed in 0..20 {
            let policy = ToyPolicy::random(&v, seed, 2.0);
            let loss = dpo_loss(&policy, &policy, &instance(), 0.37).unwrap();
            assert!((loss - LN_2).abs() < 1e-12);
            let m = implicit_reward_margin(&policy, &policy, &instance(), 0.37).unwrap();
            assert_eq!(m, 0.0);
        }
    }

    #[test]
    fn beta_zero_degenerates_to_ln2_and_zero_gradient() {
        let v = vocab();
        let theta = ToyPolicy::random(&v, 1, 2.0);
        let reference = ToyPolicy::random(&v, 2, 2.0);
        let loss = dpo_loss(&theta, &reference, &instance(), 0.0).unwrap();
        assert!((loss - LN_2).abs() < 1e-12);
        let grad = dpo_grad(&theta, &reference, &instance(), 0.0).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn loss_at_unit_margin_matches_reference_value() {
        // -ln sigmoid(1), computed independently to high precision.
        assert!((softplus(-1.0) - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn swap_antisymmetry() {
        let v = vocab();
        let theta = ToyPolicy::random(&v, 3, 2.0);
        let reference = ToyPolicy::random(&v, 4, 2.0);
        let inst = instance();
        let m = implicit_reward_margin(&theta, &reference, &inst, 0.5).unwrap();
        let m_swapped =
            implicit_reward_margin(&theta, &reference, &inst.swapped(), 0.5).unwrap();
        assert!((m + m_swapped).abs() < 1e-12);

        let loss = dpo_loss(&theta, &reference, &inst, 0.5).unwrap();
        let loss_swapped = dpo_loss(&theta, &reference, &inst.swapped(), 0.5).unwrap();
        assert!((loss - loss_swapped + m).abs() < 1e-9);
    }

    #[test]
    fn loss_decreases_as_chosen_likelihood_rises() {
        // Disjoint transition sets: boosting the chosen path leaves the
        // rejected delta untouched.
        let v = vocab();
        let reference = ToyPolicy::uniform(&v);
        let inst = PreferenceInstance::new(vec![], vec![3, 4], vec![5, 5]);
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let mut theta = ToyPolicy::uniform(&v);
            theta.logits[(BOS_ID, 2)] += 0.3 * step as f64; // BOS -> token 3
            let loss = dpo_loss(&theta, &reference, &inst, 0.5).unwrap();
            assert!(loss < last, "loss not strictly decreasing at step {step}");
            assert!(loss > 0.0);
            last = loss;
        }
    }

    #[test]
    fn gradient_sign_structure_at_identity() {
        let v = vocab();
        let theta = ToyPolicy::uniform(&v);
        // Responses longer than one token so each side visits its own row:
        // chosen walks 4 -> 4 (row 4), rejected walks 5 -> 5 (row 5), both
        // starting from the shared prompt row 3.
        let inst = PreferenceInstance::new(vec![3], vec![4, 4], vec![5, 5]);
        let grad = dpo_grad(&theta, &theta, &inst, 0.8).unwrap();

        // Descent decreases the loss, so taken chosen transitions carry
        // negative gradient mass and taken rejected ones positive mass.
        assert!(grad[(3, 3)] < 0.0, "prompt row, chosen column");
        assert!(grad[(4, 3)] < 0.0, "chosen row, chosen column");
        assert!(grad[(3, 4)] > 0.0, "prompt row, rejected column");
        assert!(grad[(5, 4)] > 0.0, "rejected row, rejected column");
        // Non-taken columns pick up the opposing softmax mass.
        assert!(grad[(4, 4)] > 0.0);
        assert!(grad[(5, 3)] < 0.0);
        // Rows never visited by either response are exactly zero.
        for row in [0usize, 1, 2] {
            assert!(grad.row(row).iter().all(|g| *g == 0.0), "row {row}");
        }
    }
}
