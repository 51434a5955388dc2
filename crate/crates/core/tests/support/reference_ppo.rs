//! Plain single-discount PPO, written without any multi-head machinery. It is
//! the oracle for the decoupled actor: given the same initial networks, random
//! stream and environment, a decoupled run must leave the policy bit-identical.

use horizon_core::nn::{Activation, Adam, Dense, DenseNet, Gradients};
use horizon_core::ppo::{collect_rollout, log_softmax, EnvRunner, PpoHyper, Trainer, Trajectory};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub struct ReferencePpo {
    pub policy: DenseNet,
    pub critic: DenseNet,
    policy_opt: Adam,
    critic_opt: Adam,
    runner: EnvRunner,
    rng: ChaCha8Rng,
    gamma: f64,
    hyper: PpoHyper,
}

/// Keeps only output row `head` of the final layer.
pub fn slice_head(net: &DenseNet, head: usize) -> DenseNet {
    let mut layers: Vec<Dense> = net.layers().to_vec();
    let last = layers.pop().unwrap();
    let n = last.in_dim();
    let row = last.weights()[head * n..(head + 1) * n].to_vec();
    layers.push(Dense::new(n, 1, row, vec![last.bias()[head]], Activation::Identity).unwrap());
    DenseNet::new(layers).unwrap()
}

impl ReferencePpo {
    /// Starts from a freshly constructed trainer's state, using only its
    /// long-horizon critic output.
    pub fn from_trainer(trainer: &Trainer) -> Self {
        let cfg = trainer.config();
        let policy = trainer.agent().policy.clone();
        let critic = slice_head(&trainer.agent().critic, cfg.gammas.long_index());
        Self {
            policy_opt: Adam::new(&policy, cfg.ppo.actor_lr),
            critic_opt: Adam::new(&critic, cfg.ppo.critic_lr),
            policy,
            critic,
            runner: trainer.runner().clone(),
            rng: trainer.rng().clone(),
            gamma: cfg.gammas.long_gamma(),
            hyper: cfg.ppo.clone(),
        }
    }

    fn advantages(&self, traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
        let n = traj.len();
        let mut adv = vec![0.0; n];
        let mut next_adv = 0.0;
        for t in (0..n).rev() {
            let delta = traj.rewards[t] + self.gamma * traj.next_values[t][0] - traj.values[t][0];
            let carried = if traj.terminated[t] || traj.truncated[t] { 0.0 } else { next_adv };
            next_adv = delta + self.gamma * self.hyper.gae_lambda * carried;
            adv[t] = next_adv;
        }
        let returns = adv.iter().zip(&traj.values).map(|(a, v)| a + v[0]).collect();
        (adv, returns)
    }

    fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
        if out.len() > 1 && out.last().unwrap().len() == 1 {
            let tail = out.pop().unwrap();
            out.last_mut().unwrap().extend(tail);
        }
        out
    }

    fn policy_step(&mut self, traj: &Trajectory, adv: &[f64], batch: &[usize]) {
        let b = batch.len() as f64;
        let n = b;
        let mean = batch.iter().map(|&t| adv[t]).sum::<f64>() / n;
        let std = (batch.iter().map(|&t| (adv[t] - mean) * (adv[t] - mean)).sum::<f64>() / n).sqrt();
        let eps = self.hyper.clip_epsilon;
        let c_ent = self.hyper.entropy_coef;
        let mut grads = Gradients::zeros_like(&self.policy);
        for &t in batch {
            let a_hat = if std <= 1e-8 { 0.0 } else { (adv[t] - mean) / std };
            let tape = self.policy.record(&traj.observations[t]).unwrap();
            let logp = log_softmax(tape.output());
            let action = traj.actions[t];
            let ratio = (logp[action] - traj.log_probs[t]).exp();
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            // the surrogate only depends on the ratio when the unclipped term is the minimum
            let d_ratio = if ratio * a_hat <= clipped * a_hat { a_hat } else { 0.0 };
            let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let h = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
            let coef = -d_ratio * ratio / b;
            let mut d = Vec::with_capacity(p.len());
            for k in 0..p.len() {
                let indicator = if k == action { 1.0 } else { 0.0 };
                d.push(coef * (indicator - p[k]) + c_ent / b * p[k] * (logp[k] + h));
            }
            self.policy.backward(&tape, &d, &mut grads).unwrap();
        }
        self.policy_opt.step(&mut self.policy, &grads).unwrap();
    }

    fn value_step(&mut self, traj: &Trajectory, returns: &[f64], batch: &[usize]) {
        let b = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        for &t in batch {
            let tape = self.critic.record(&traj.observations[t]).unwrap();
            let d = (tape.output()[0] - returns[t]) / b;
            self.critic.backward(&tape, &[d], &mut grads).unwrap();
        }
        self.critic_opt.step(&mut self.critic, &grads).unwrap();
    }

    pub fn update(&mut self) -> Trajectory {
        let traj = collect_rollout(
            &self.policy,
            &self.critic,
            &mut self.runner,
            self.hyper.rollout_length,
            &mut self.rng,
        )
        .unwrap();
        let (adv, returns) = self.advantages(&traj);
        for _ in 0..self.hyper.epochs {
            let mut order: Vec<usize> = (0..traj.len()).collect();
            order.shuffle(&mut self.rng);
            for batch in Self::batches(&order, self.hyper.minibatch_size) {
                if batch.len() >= 2 {
                    self.policy_step(&traj, &adv, &batch);
                }
                self.value_step(&traj, &returns, &batch);
            }
        }
        traj
    }
}

pub fn bits(net: &DenseNet) -> Vec<u64> {
    net.flat_params().iter().map(|p| p.to_bits()).collect()
}
