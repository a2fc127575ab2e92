use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrpoError {
    #[error("group of size {0} is too small; need at least 2")]
    GroupTooSmall(usize),
    #[error("{advantages} advantages but {logprobs} log-probabilities")]
    LengthMismatch { advantages: usize, logprobs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub reward: f64,
    /// Sum of token log-probabilities of the sampled output.
    pub sequence_logprob: f64,
}

/// `(R_i - mean) / (sigma + epsilon)` with the population standard deviation.
pub fn normalize_group(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    let k = rewards.len();
    if k < 2 {
        return Err(GrpoError::GroupTooSmall(k));
    }
    let mean = rewards.iter().sum::<f64>() / k as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k as f64;
    let sigma = var.sqrt();
    Ok(rewards.iter().map(|r| (r - mean) / (sigma + epsilon)).collect())
}

/// `-Σ advantage_i · logprob_i`.
pub fn grpo_loss(advantages: &[f64], logprobs: &[f64]) -> Result<f64, GrpoError> {
    if advantages.len() != logprobs.len() {
        return Err(GrpoError::LengthMismatch {
            advantages: advantages.len(),
            logprobs: logprobs.len(),
        });
    }
    Ok(-advantages.iter().zip(logprobs).map(|(a, l)| a * l).sum::<f64>())
}

/// Normalizes the group's rewards and returns the loss.
pub fn group_loss(samples: &[GroupSample], epsilon: f64) -> Result<f64, GrpoError> {
    let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let logprobs: Vec<f64> = samples.iter().map(|s| s.sequence_logprob).collect();
    grpo_loss(&normalize_group(&rewards, epsilon)?, &logprobs)
}
