use rand::Rng;

use crate::envs::{Env, Environment};
use crate::error::{check_dim, Error, Result};
use crate::nn::DenseNet;

/// One rollout, possibly spanning several episodes. Per-head values are indexed
/// `[t][head]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Behaviour-policy log-probabilities of the taken actions.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Critic values of the successor state; zero after a termination.
    pub next_values: Vec<Vec<f64>>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Entropy of the behaviour policy at each step.
    pub policy_entropies: Vec<f64>,
    /// Undiscounted returns of episodes that finished inside this rollout.
    pub episode_returns: Vec<f64>,
    /// Return accumulated so far by the episode still running at the end.
    pub open_return: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn episode_end(&self, t: usize) -> bool {
        self.terminated[t] || self.truncated[t]
    }
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - lse).collect()
}

/// Inverse-CDF draw from `probs` using one uniform variate.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Environment plus the bookkeeping needed to auto-reset across rollouts.
#[derive(Debug, Clone)]
pub struct EnvRunner {
    env: Env,
    observation: Vec<f64>,
    episode_return: f64,
    needs_reset: bool,
}

impl EnvRunner {
    pub fn new(env: Env) -> Self {
        Self {
            env,
            observation: Vec::new(),
            episode_return: 0.0,
            needs_reset: true,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }
}

/// Samples `length` steps from the categorical policy, resetting the
/// environment (with a seed drawn from `rng`) whenever an episode ends.
pub fn collect_rollout<R: Rng + ?Sized>(
    policy: &DenseNet,
    critic: &DenseNet,
    runner: &mut EnvRunner,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let spec = runner.env.spec();
    check_dim("policy outputs vs actions", spec.action_count, policy.output_dim())?;
    let heads = critic.output_dim();
    let mut traj = Trajectory::default();
    // critic value of the current observation, carried across steps
    let mut current_values: Option<Vec<f64>> = None;

    for _ in 0..length {
        if runner.needs_reset {
            let seed: u64 = rng.gen();
            runner.observation = runner.env.reset(seed);
            runner.episode_return = 0.0;
            runner.needs_reset = false;
            current_values = None;
        }
        let obs = std::mem::take(&mut runner.observation);
        let logits = policy.forward(&obs)?;
        let log_probs = log_softmax(&logits);
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("policy probabilities".into()));
        }
        let action = sample_categorical(&probs, rng);
        let entropy = -probs
            .iter()
            .zip(&log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * l)
            .sum::<f64>();
        let values = match current_values.take() {
            Some(v) => v,
            None => critic.forward(&obs)?,
        };

        let step = runner.env.step(action)?;
        let next_values = if step.terminated {
            vec![0.0; heads]
        } else {
            critic.forward(&step.observation)?
        };
        if !step.done() {
            current_values = Some(next_values.clone());
        }

        runner.episode_return += step.reward;
        if step.done() {
            traj.episode_returns.push(runner.episode_return);
            runner.needs_reset = true;
        }

        traj.observations.push(obs);
        traj.actions.push(action);
        traj.log_probs.push(log_probs[action]);
        traj.rewards.push(step.reward);
        traj.values.push(values);
        traj.next_values.push(next_values);
        traj.terminated.push(step.terminated);
        traj.truncated.push(step.truncated);
        traj.policy_entropies.push(entropy);
        runner.observation = step.observation;
    }
    traj.open_return = if runner.needs_reset {
        0.0
    } else {
        runner.episode_return
    };
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use crate::nn::{Activation, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn const_net(input: usize, outputs: Vec<f64>) -> DenseNet {
        let out = outputs.len();
        DenseNet::new(vec![Dense::new(input, out, vec![0.0; input * out], outputs, Activation::Identity)
            .unwrap()])
        .unwrap()
    }

    #[test]
    fn log_softmax_is_normalised() {
        let l = log_softmax(&[1.0, 2.0, -3.0]);
        assert!((l.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-15);
        let l = log_softmax(&[1e6, 0.0]);
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn deterministic_policy_is_predictable() {
        let env = EnvConfig::distractor_chain().build().unwrap();
        let mut runner = EnvRunner::new(env);
        let policy = const_net(12, vec![1e6, 0.0]); // always ADVANCE
        let critic = const_net(12, vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = collect_rollout(&policy, &critic, &mut runner, 25, &mut rng).unwrap();
        assert!(traj.actions.iter().all(|&a| a == 0));
        // the goal is reached every 10 steps
        assert_eq!(traj.episode_returns, vec![1.0, 1.0]);
        assert_eq!(
            traj.terminated.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect::<Vec<_>>(),
            vec![9, 19]
        );
        assert_eq!(traj.open_return, 0.0);
        assert!(traj.next_values[9].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_length_rollout_is_empty() {
        let env = EnvConfig::mini_lander().build().unwrap();
        let mut runner = EnvRunner::new(env);
        let policy = const_net(4, vec![0.0; 4]);
        let critic = const_net(4, vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = collect_rollout(&policy, &critic, &mut runner, 0, &mut rng).unwrap();
        assert!(traj.is_empty());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let env = EnvConfig::mini_lander().build().unwrap();
            let mut runner = EnvRunner::new(env);
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let policy = DenseNet::mlp(4, &[16], 4, 1.0, &mut rng).unwrap();
            let critic = DenseNet::mlp(4, &[16], 4, 1.0, &mut rng).unwrap();
            collect_rollout(&policy, &critic, &mut runner, 500, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn action_count_must_match_policy() {
        let env = EnvConfig::mini_lander().build().unwrap();
        let mut runner = EnvRunner::new(env);
        let policy = const_net(4, vec![0.0; 2]);
        let critic = const_net(4, vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(collect_rollout(&policy, &critic, &mut runner, 3, &mut rng).is_err());
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probs = [0.1, 0.6, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 20_000.0 - p).abs() < 0.015);
        }
    }
}
