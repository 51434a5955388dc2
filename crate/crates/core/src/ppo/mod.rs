//! Clipped-surrogate PPO over a multi-head critic.

mod rollout;
mod trainer;

pub use rollout::{collect_rollout, log_softmax, sample_categorical, EnvRunner, Trajectory};
pub use trainer::{policy_ratios, Agent, Trainer, TrainerConfig, DEFAULT_TAU};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoHyper {
    pub clip_epsilon: f64,
    pub rollout_length: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Bonus on the action distribution's entropy. The router entropy is never
    /// regularised.
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub router_lr: f64,
    /// Weight on the short-horizon critic losses in `long_plus_aux` mode.
    pub lambda_aux: f64,
    pub gae_lambda: f64,
    pub total_updates: usize,
    pub hidden: Vec<usize>,
    pub router_hidden: Vec<usize>,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            rollout_length: 2048,
            epochs: 10,
            minibatch_size: 64,
            entropy_coef: 0.01,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            router_lr: 3e-4,
            lambda_aux: 0.5,
            gae_lambda: crate::advantage::DEFAULT_LAMBDA,
            total_updates: 200,
            hidden: vec![64, 64],
            router_hidden: vec![64],
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "clip epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.lambda_aux >= 0.0) {
            return Err(Error::Config(format!("lambda_aux must be >= 0, got {}", self.lambda_aux)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("gae lambda must lie in [0, 1], got {}", self.gae_lambda)));
        }
        if self.minibatch_size < 2 {
            return Err(Error::Config("minibatch size must be >= 2".into()));
        }
        for (name, lr) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("router_lr", self.router_lr),
            ("entropy_coef", self.entropy_coef),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {lr}")));
            }
        }
        Ok(())
    }
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`
pub fn clip_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    clip_objective_grad(ratio, advantage, epsilon).0
}

/// Objective value with its partial derivatives `(value, d/d ratio, d/d advantage)`.
pub fn clip_objective_grad(ratio: f64, advantage: f64, epsilon: f64) -> (f64, f64, f64) {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    let unclipped_obj = ratio * advantage;
    let clipped_obj = clipped * advantage;
    if unclipped_obj <= clipped_obj {
        (unclipped_obj, advantage, ratio)
    } else {
        (clipped_obj, 0.0, clipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticLossMode {
    /// `(1/K) sum_i L_i`
    MeanAll,
    /// `L_long + lambda_aux * sum_{short} L_i`
    LongPlusAux { lambda_aux: f64 },
}

/// Critic loss and its gradient with respect to each prediction. `values` and
/// `targets` are indexed `[head][sample]`; every `L_i` is the batch mean of
/// `0.5 (V - R)^2`.
pub fn critic_loss_grad(
    values: &[Vec<f64>],
    targets: &[Vec<f64>],
    mode: CriticLossMode,
    long_index: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_dim("critic heads", values.len(), targets.len())?;
    let k = values.len();
    if long_index >= k {
        return Err(Error::Config(format!("long head {long_index} out of range for {k} heads")));
    }
    let b = values[0].len();
    for (v, t) in values.iter().zip(targets) {
        check_dim("critic batch", b, v.len())?;
        check_dim("critic batch", b, t.len())?;
    }
    if b == 0 {
        return Ok((0.0, vec![Vec::new(); k]));
    }
    let bf = b as f64;
    let head_weight = |i: usize| match mode {
        CriticLossMode::MeanAll => 1.0 / k as f64,
        CriticLossMode::LongPlusAux { lambda_aux } => {
            if i == long_index {
                1.0
            } else {
                lambda_aux
            }
        }
    };
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(k);
    for (i, (v, t)) in values.iter().zip(targets).enumerate() {
        let c = head_weight(i);
        let head_loss = v.iter().zip(t).map(|(v, t)| 0.5 * (v - t) * (v - t)).sum::<f64>() / bf;
        loss += c * head_loss;
        grads.push(v.iter().zip(t).map(|(v, t)| c * (v - t) / bf).collect());
    }
    Ok((loss, grads))
}

pub fn critic_loss(
    values: &[Vec<f64>],
    targets: &[Vec<f64>],
    mode: CriticLossMode,
    long_index: usize,
) -> Result<f64> {
    critic_loss_grad(values, targets, mode, long_index).map(|(l, _)| l)
}
