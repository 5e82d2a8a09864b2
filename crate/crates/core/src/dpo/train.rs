//! Deterministic full-batch gradient descent on the preference loss.
//!
//! The reference policy is a frozen copy of the starting policy. Instances
//! are visited in a fixed order and the update is plain gradient descent,
//! so a run is bit-reproducible given the same inputs and config.

use ndarray::Array2;

use super::loss::{dpo_grad, dpo_loss, implicit_reward_margin};
use super::policy::{PreferenceInstance, ToyPolicy};
use super::DpoError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Sharpness of the preference signal.
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Seed for anything randomized around training (e.g. policy init);
    /// the descent itself is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Tabular-scale defaults; nothing in the method prescribes them.
        Self {
            beta: 0.1,
            learning_rate: 0.5,
            steps: 200,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta > 0.0) {
            return Err(DpoError::InvalidConfig("beta must be > 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DpoError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Dataset metrics of one policy state.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub mean_loss: f64,
    pub mean_margin: f64,
    /// Per-instance margins, in dataset order.
    pub margins: Vec<f64>,
}

impl DatasetStats {
    /// Fraction of instances whose margin is strictly positive.
    pub fn positive_margin_fraction(&self) -> f64 {
        if self.margins.is_empty() {
            return 0.0;
        }
        self.margins.iter().filter(|m| **m > 0.0).count() as f64 / self.margins.len() as f64
    }
}

/// Mean loss and margin of a policy over a dataset.
pub fn evaluate(
    theta: &ToyPolicy,
    reference: &ToyPolicy,
    dataset: &[PreferenceInstance],
    beta: f64,
) -> Result<DatasetStats, DpoError> {
    if dataset.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    let mut total_loss = 0.0;
    let mut margins = Vec::with_capacity(dataset.len());
    for inst in dataset {
        total_loss += dpo_loss(theta, reference, inst, beta)?;
        margins.push(implicit_reward_margin(theta, reference, inst, beta)?);
    }
    let n = dataset.len() as f64;
    Ok(DatasetStats {
        mean_loss: total_loss / n,
        mean_margin: margins.iter().sum::<f64>() / n,
        margins,
    })
}

/// Metrics of the policy after `step` gradient updates.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub mean_loss: f64,
    pub mean_margin: f64,
}

/// Trains a copy of `theta0` against its own frozen snapshot as reference.
///
/// `history[k]` records metrics of the policy after `k` updates, so
/// `history[0]` is the starting state; the returned policy is the state
/// after all `cfg.steps` updates. `steps == 0` returns the start unchanged
/// with an empty history.
pub fn train(
    theta0: &ToyPolicy,
    dataset: &[PreferenceInstance],
    cfg: &TrainConfig,
) -> Result<(ToyPolicy, Vec<StepStats>), DpoError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    for inst in dataset {
        inst.validate_for(theta0)?;
    }

    let reference = theta0.clone();
    let mut theta = theta0.clone();
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut grad_sum: Array2<f64> = Array2::zeros(theta.logits.dim());
        let mut loss_sum = 0.0;
        let mut margin_sum = 0.0;
        for inst in dataset {
            loss_sum += dpo_loss(&theta, &reference, inst, cfg.beta)?;
            margin_sum += implicit_reward_margin(&theta, &reference, inst, cfg.beta)?;
            grad_sum += &dpo_grad(&theta, &reference, inst, cfg.beta)?;
        }
        let n = dataset.len() as f64;
        let mean_loss = loss_sum / n;
        if !mean_loss.is_finite() {
            return Err(DpoError::Diverged { step });
        }
        history.push(StepStats {
            step,
            mean_loss,
            mean_margin: margin_sum / n,
        });
        grad_sum.mapv_inplace(|g| g / n);
        theta.logits.scaled_add(-cfg.learning_rate, &grad_sum);
    }

    Ok((theta, history))
}

/// Writes the training trajectory as `step,mean_loss,mean_margin` CSV,
/// appending one final row for the trained policy when provided.
pub fn write_history_csv<W: std::io::Write>(
    writer: W,
    history: &[StepStats],
    final_stats: Option<(usize, &DatasetStats)>,
) -> Result<(), DpoError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["step", "mean_loss", "mean_margin"])
        .map_err(|err| DpoError::Csv(err.to_string()))?;
    for stats in history {
        csv.write_record([
            stats.step.to_string(),
            format!("{}", stats.mean_loss),
            format!("{}", stats.mean_margin),
        ])
        .map_err(|err| DpoError::Csv(err.to_string()))?;
    }
    if let Some((step, stats)) = final_stats {
        csv.write_record([
            step.to_string(),
            format!("{}", stats.mean_loss),
            format!("{}", stats.mean_margin),
        ])
        .map_err(|err| DpoError::Csv(err.to_string()))?;
    }
    csv.flush().map_err(|err| DpoError::Csv(err.to_string()))
}
