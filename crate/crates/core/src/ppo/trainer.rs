use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{collect_rollout, log_softmax, EnvRunner, Trajectory};
use super::{clip_objective_grad, critic_loss_grad, CriticLossMode, PpoHyper};
use crate::advantage::{batch_normalize, compute_gae, td_errors, GammaSet, MultiGammaAdvantages};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::envs::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::nn::{Adam, DenseNet, Gradients};
use crate::routing::{
    mix, route_attention, route_by_error, route_decoupled, routed_logit_gradient, softmax,
    ActorMode, RouterHead, RouterOutput,
};

pub const DEFAULT_TAU: f64 = 1.0;

/// Everything a single training run needs besides its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub env: EnvConfig,
    pub actor_mode: ActorMode,
    pub gammas: GammaSet,
    pub ppo: PpoHyper,
    /// Temperature of the error-based router.
    pub tau: f64,
}

impl TrainerConfig {
    pub fn new(env: EnvConfig, actor_mode: ActorMode) -> Self {
        Self {
            env,
            actor_mode,
            gammas: GammaSet::default(),
            ppo: PpoHyper::default(),
            tau: DEFAULT_TAU,
        }
    }

    /// Routing modes train every head equally; the decoupled modes weight the
    /// short heads by `lambda_aux` (zero for `long_only`).
    pub fn critic_mode(&self) -> CriticLossMode {
        match self.actor_mode {
            ActorMode::Attention | ActorMode::Error => CriticLossMode::MeanAll,
            ActorMode::Decoupled => CriticLossMode::LongPlusAux {
                lambda_aux: self.ppo.lambda_aux,
            },
            ActorMode::LongOnly => CriticLossMode::LongPlusAux { lambda_aux: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: DenseNet,
    /// One output per discount head.
    pub critic: DenseNet,
    /// Present in attention mode only.
    pub router: Option<RouterHead>,
}

/// Current-policy probability ratios for the actions stored in `traj`.
pub fn policy_ratios(policy: &DenseNet, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.observations
        .iter()
        .zip(traj.actions.iter().zip(&traj.log_probs))
        .map(|(obs, (&a, &old))| {
            let logp = log_softmax(&policy.forward(obs)?);
            Ok((logp[a] - old).exp())
        })
        .collect()
}

/// Splits `order` into minibatches, folding a trailing singleton into the
/// previous batch so every batch can be normalised.
fn minibatches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out[out.len() - 1].len() == 1 {
        out.pop();
        let start = (out.len() - 1) * size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

/// A single seeded PPO run.
///
/// The random stream is consumed in a fixed order: network initialisation
/// (policy, critic, then router), then per update the rollout (reset seeds and
/// action draws) followed by one shuffle of `0..T` per epoch.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainerConfig,
    agent: Agent,
    policy_opt: Adam,
    critic_opt: Adam,
    router_opt: Option<Adam>,
    runner: EnvRunner,
    rng: ChaCha8Rng,
    updates_done: usize,
    last_mean_return: Option<f64>,
    diverged: bool,
}

impl Trainer {
    pub fn new(config: TrainerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = config.env.build()?;
        let spec = env.spec();
        let k = config.gammas.len();
        let hidden = &config.ppo.hidden;

        let policy = DenseNet::mlp(spec.observation_dim, hidden, spec.action_count, 0.01, &mut rng)?;
        let critic = DenseNet::mlp(spec.observation_dim, hidden, k, 1.0, &mut rng)?;
        let router = match config.actor_mode {
            ActorMode::Attention => Some(RouterHead::new(
                spec.observation_dim,
                k,
                &config.ppo.router_hidden,
                0.01,
                &mut rng,
            )?),
            _ => None,
        };

        let policy_opt = Adam::new(&policy, config.ppo.actor_lr);
        let critic_opt = Adam::new(&critic, config.ppo.critic_lr);
        let router_opt = router.as_ref().map(|r| Adam::new(&r.net, config.ppo.router_lr));
        Ok(Self {
            config,
            agent: Agent {
                policy,
                critic,
                router,
            },
            policy_opt,
            critic_opt,
            router_opt,
            runner: EnvRunner::new(env),
            rng,
            updates_done: 0,
            last_mean_return: None,
            diverged: false,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    /// Direct access for warm starts. Optimizer state is kept as is.
    pub fn agent_mut(&mut self) -> &mut Agent {
        &mut self.agent
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn runner(&self) -> &EnvRunner {
        &self.runner
    }

    pub fn updates_done(&self) -> usize {
        self.updates_done
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn collect(&mut self) -> Result<Trajectory> {
        collect_rollout(
            &self.agent.policy,
            &self.agent.critic,
            &mut self.runner,
            self.config.ppo.rollout_length,
            &mut self.rng,
        )
    }

    /// Collects one rollout and runs one update on it.
    pub fn step(&mut self) -> Result<DiagnosticsRecord> {
        if self.diverged {
            return Err(Error::Usage("run has diverged; no further updates".into()));
        }
        match self.collect() {
            Ok(traj) => self.update(&traj),
            Err(Error::NonFinite(_)) => Ok(self.diverged_record(None)),
            Err(e) => Err(e),
        }
    }

    fn mean_return(&mut self, traj: &Trajectory) -> f64 {
        if !traj.episode_returns.is_empty() {
            let m = traj.episode_returns.iter().sum::<f64>() / traj.episode_returns.len() as f64;
            self.last_mean_return = Some(m);
            m
        } else {
            self.last_mean_return.unwrap_or(traj.open_return)
        }
    }

    fn diverged_record(&mut self, mean_return: Option<f64>) -> DiagnosticsRecord {
        self.diverged = true;
        let update = self.updates_done;
        self.updates_done += 1;
        DiagnosticsRecord {
            update,
            mean_return: mean_return.or(self.last_mean_return).unwrap_or(f64::NAN),
            hack_rate: None,
            router_entropy: f64::NAN,
            weight_means: vec![f64::NAN; self.config.gammas.len()],
            long_adv_var: None,
            policy_entropy: f64::NAN,
            diverged: true,
        }
    }

    /// Runs the configured number of PPO epochs on `traj` and reports the
    /// diagnostics measured at collection time. A non-finite quantity anywhere
    /// marks the run as diverged instead of failing.
    pub fn update(&mut self, traj: &Trajectory) -> Result<DiagnosticsRecord> {
        if self.diverged {
            return Err(Error::Usage("run has diverged; no further updates".into()));
        }
        let k = self.config.gammas.len();
        let mean_return = self.mean_return(traj);
        if traj.is_empty() {
            let update = self.updates_done;
            self.updates_done += 1;
            return Ok(DiagnosticsRecord {
                update,
                mean_return,
                hack_rate: None,
                router_entropy: 0.0,
                weight_means: vec![0.0; k],
                long_adv_var: None,
                policy_entropy: 0.0,
                diverged: false,
            });
        }

        let prepared = self.route(traj);
        let (adv, routing) = match prepared {
            Ok(p) => p,
            Err(Error::NonFinite(_)) => return Ok(self.diverged_record(Some(mean_return))),
            Err(e) => return Err(e),
        };

        let record = DiagnosticsRecord {
            update: self.updates_done,
            mean_return,
            hack_rate: diagnostics::hack_rate_for(&routing.weights, &adv)?,
            router_entropy: diagnostics::mean_router_entropy(&routing.weights),
            weight_means: diagnostics::weight_means(&routing.weights, k),
            long_adv_var: diagnostics::long_adv_variance(&adv, self.config.gammas.long_index()),
            policy_entropy: traj.policy_entropies.iter().sum::<f64>() / traj.len() as f64,
            diverged: false,
        };

        match self.optimize(traj, &adv, &routing.routed) {
            Ok(()) => {
                self.updates_done += 1;
                Ok(record)
            }
            Err(Error::NonFinite(_)) => Ok(self.diverged_record(Some(mean_return))),
            Err(e) => Err(e),
        }
    }

    /// Multi-head advantages and the actor-side routing at collection time.
    fn route(&self, traj: &Trajectory) -> Result<(MultiGammaAdvantages, RouterOutput)> {
        let gammas = &self.config.gammas;
        let adv = compute_gae(traj, gammas, self.config.ppo.gae_lambda)?;
        adv.check_finite()?;
        let routing = match self.config.actor_mode {
            ActorMode::Attention => {
                let router = self.agent.router.as_ref().expect("attention mode has a router");
                let logits = traj
                    .observations
                    .iter()
                    .map(|o| router.logits(o))
                    .collect::<Result<Vec<_>>>()?;
                route_attention(&adv, &logits)?
            }
            ActorMode::Error => {
                let abs_td: Vec<Vec<f64>> = td_errors(traj, gammas)?
                    .into_iter()
                    .map(|h| h.into_iter().map(f64::abs).collect())
                    .collect();
                route_by_error(&adv, &abs_td, self.config.tau)?
            }
            ActorMode::Decoupled | ActorMode::LongOnly => route_decoupled(&adv, gammas)?,
        };
        Ok((adv, routing))
    }

    fn optimize(
        &mut self,
        traj: &Trajectory,
        adv: &MultiGammaAdvantages,
        fixed_routed: &[f64],
    ) -> Result<()> {
        let t_len = traj.len();
        for _ in 0..self.config.ppo.epochs {
            let mut order: Vec<usize> = (0..t_len).collect();
            order.shuffle(&mut self.rng);
            for mb in minibatches(&order, self.config.ppo.minibatch_size) {
                if mb.len() >= 2 {
                    self.actor_step(traj, adv, fixed_routed, mb)?;
                }
                self.critic_step(traj, adv, mb)?;
            }
        }
        Ok(())
    }

    fn actor_step(
        &mut self,
        traj: &Trajectory,
        adv: &MultiGammaAdvantages,
        fixed_routed: &[f64],
        mb: &[usize],
    ) -> Result<()> {
        let b = mb.len() as f64;
        let eps = self.config.ppo.clip_epsilon;
        let ent_coef = self.config.ppo.entropy_coef;
        let policy = &self.agent.policy;

        // Routed advantage for each sample. In attention mode it is recomputed
        // with the current router so the surrogate gradient reaches it.
        let mut router_tapes = Vec::new();
        let mut router_weights = Vec::new();
        let routed: Vec<f64> = match &self.agent.router {
            Some(router) => {
                let mut routed = Vec::with_capacity(mb.len());
                for &t in mb {
                    let tape = router.net.record(&traj.observations[t])?;
                    let w = softmax(tape.output());
                    routed.push(mix(&w, &adv.sample(t)));
                    router_tapes.push(tape);
                    router_weights.push(w);
                }
                routed
            }
            None => mb.iter().map(|&t| fixed_routed[t]).collect(),
        };
        // Normalisation statistics are treated as constants by the gradient.
        let norm = batch_normalize(&routed)?;

        let mut policy_grads = Gradients::zeros_like(policy);
        let mut router_grads = self.agent.router.as_ref().map(|r| Gradients::zeros_like(&r.net));
        let mut loss = 0.0;
        for (j, &t) in mb.iter().enumerate() {
            let tape = policy.record(&traj.observations[t])?;
            let logp = log_softmax(tape.output());
            let action = traj.actions[t];
            let ratio = (logp[action] - traj.log_probs[t]).exp();
            let (obj, d_ratio, d_adv) = clip_objective_grad(ratio, norm.values[j], eps);
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
            loss += -obj / b - ent_coef * entropy / b;

            // dL/dlogp[action]
            let coef = -d_ratio * ratio / b;
            let d_logits: Vec<f64> = probs
                .iter()
                .zip(&logp)
                .enumerate()
                .map(|(i, (p, l))| {
                    let onehot = if i == action { 1.0 } else { 0.0 };
                    coef * (onehot - p) + ent_coef / b * p * (l + entropy)
                })
                .collect();
            policy.backward(&tape, &d_logits, &mut policy_grads)?;

            if let (Some(router), Some(rg)) = (&self.agent.router, router_grads.as_mut()) {
                if !norm.degenerate {
                    let d_routed = -d_adv / b / norm.std;
                    let dz: Vec<f64> = routed_logit_gradient(&router_weights[j], &adv.sample(t))
                        .into_iter()
                        .map(|g| d_routed * g)
                        .collect();
                    router.net.backward(&router_tapes[j], &dz, rg)?;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("policy loss".into()));
        }
        self.policy_opt.step(&mut self.agent.policy, &policy_grads)?;
        if let (Some(router), Some(opt), Some(rg)) =
            (self.agent.router.as_mut(), self.router_opt.as_mut(), router_grads.as_ref())
        {
            opt.step(&mut router.net, rg)?;
        }
        Ok(())
    }

    fn critic_step(
        &mut self,
        traj: &Trajectory,
        adv: &MultiGammaAdvantages,
        mb: &[usize],
    ) -> Result<()> {
        let k = self.config.gammas.len();
        let critic = &self.agent.critic;
        let mut tapes = Vec::with_capacity(mb.len());
        let mut values = vec![Vec::with_capacity(mb.len()); k];
        let mut targets = vec![Vec::with_capacity(mb.len()); k];
        for &t in mb {
            let tape = critic.record(&traj.observations[t])?;
            for i in 0..k {
                values[i].push(tape.output()[i]);
                targets[i].push(adv.targets[i][t]);
            }
            tapes.push(tape);
        }
        let (loss, grads) = critic_loss_grad(
            &values,
            &targets,
            self.config.critic_mode(),
            self.config.gammas.long_index(),
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        let mut critic_grads = Gradients::zeros_like(critic);
        for (j, tape) in tapes.iter().enumerate() {
            let d_out: Vec<f64> = grads.iter().map(|g| g[j]).collect();
            critic.backward(tape, &d_out, &mut critic_grads)?;
        }
        self.critic_opt.step(&mut self.agent.critic, &critic_grads)
    }
}
