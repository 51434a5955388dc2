//! Episodic environments with dense short-horizon rewards competing against a
//! delayed terminal outcome.

mod chain;
mod lander;

pub use chain::{
    optimal_return_oracle, ChainParams, ChainSolution, DistractorChain, PolicyLabel, ADVANCE, COLLECT,
};
pub use lander::{LanderParams, MiniLander, LANDER_R_MAX, NOOP, THRUST_LEFT, THRUST_RIGHT, THRUST_UP};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_count: usize,
    /// Bound on the magnitude of every emitted reward.
    pub r_max: f64,
    /// Episodes are truncated after this many steps.
    pub horizon: usize,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

/// Environment selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    DistractorChain(ChainParams),
    MiniLander(LanderParams),
}

impl EnvConfig {
    pub fn distractor_chain() -> Self {
        EnvConfig::DistractorChain(ChainParams::default())
    }

    pub fn mini_lander() -> Self {
        EnvConfig::MiniLander(LanderParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::DistractorChain(_) => "distractor_chain",
            EnvConfig::MiniLander(_) => "mini_lander",
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvConfig::DistractorChain(p) => Env::Chain(DistractorChain::new(p.clone())?),
            EnvConfig::MiniLander(p) => Env::Lander(MiniLander::new(p.clone())?),
        })
    }
}

/// Closed set of environments; cloneable so training state can be snapshotted.
#[derive(Debug, Clone)]
pub enum Env {
    Chain(DistractorChain),
    Lander(MiniLander),
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        match self {
            Env::Chain(e) => e.spec(),
            Env::Lander(e) => e.spec(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::Chain(e) => e.reset(seed),
            Env::Lander(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        match self {
            Env::Chain(e) => e.step(action),
            Env::Lander(e) => e.step(action),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_names() {
        assert_eq!(EnvConfig::distractor_chain().name(), "distractor_chain");
        assert_eq!(EnvConfig::mini_lander().name(), "mini_lander");
    }

    #[test]
    fn built_envs_report_spec() {
        let chain = EnvConfig::distractor_chain().build().unwrap();
        assert_eq!(chain.spec().action_count, 2);
        assert_eq!(chain.spec().horizon, 40);
        let lander = EnvConfig::mini_lander().build().unwrap();
        assert_eq!(lander.spec().observation_dim, 4);
        assert_eq!(lander.spec().action_count, 4);
        assert_eq!(lander.spec().r_max, 1.0);
    }
}
