use serde::{Deserialize, Serialize};

use super::{EnvConfig, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

pub const ADVANCE: usize = 0;
pub const COLLECT: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    /// Number of ADVANCE steps from the start to the goal.
    pub length: usize,
    pub horizon: usize,
    pub collect_reward: f64,
    pub goal_reward: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            length: 10,
            horizon: 40,
            collect_reward: 0.05,
            goal_reward: 1.0,
        }
    }
}

/// A line of `length + 1` positions. ADVANCE moves one step right and pays
/// nothing until the last position, which pays the goal reward and terminates.
/// COLLECT pays a small reward and stays put.
///
/// Observations are a one-hot position (width `length + 1`) followed by the
/// elapsed fraction of the horizon, so the finite-horizon optimum is
/// representable by a stationary policy.
#[derive(Debug, Clone)]
pub struct DistractorChain {
    params: ChainParams,
    position: usize,
    t: usize,
    done: bool,
}

impl DistractorChain {
    pub fn new(params: ChainParams) -> Result<Self> {
        if params.length == 0 {
            return Err(Error::Config("chain length must be >= 1".into()));
        }
        if params.horizon == 0 {
            return Err(Error::Config("chain horizon must be >= 1".into()));
        }
        Ok(Self {
            params,
            position: 0,
            t: 0,
            done: true,
        })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn position(&self) -> usize {
        self.position
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.params.length + 2];
        obs[self.position] = 1.0;
        obs[self.params.length + 1] = self.t as f64 / self.params.horizon as f64;
        obs
    }
}

impl Environment for DistractorChain {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: self.params.length + 2,
            action_count: 2,
            r_max: self.params.goal_reward.abs().max(self.params.collect_reward.abs()),
            horizon: self.params.horizon,
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = 0;
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; reset first".into()));
        }
        let mut terminated = false;
        let reward = match action {
            ADVANCE => {
                self.position += 1;
                if self.position == self.params.length {
                    terminated = true;
                    self.params.goal_reward
                } else {
                    0.0
                }
            }
            COLLECT => self.params.collect_reward,
            other => {
                return Err(Error::Usage(format!(
                    "action {other} out of range for distractor chain (2 actions)"
                )))
            }
        };
        self.t += 1;
        let truncated = !terminated && self.t >= self.params.horizon;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyLabel {
    /// The optimal policy never reaches the goal.
    Myopic,
    /// The optimal policy reaches the goal within the horizon.
    FarSighted,
}

impl std::fmt::Display for PolicyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyLabel::Myopic => "myopic",
            PolicyLabel::FarSighted => "far-sighted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSolution {
    pub gamma: f64,
    pub label: PolicyLabel,
    /// Optimal discounted value of the start state.
    pub value: f64,
    /// Undiscounted episode return of the optimal action sequence.
    pub undiscounted_return: f64,
    pub actions: Vec<usize>,
}

/// Exact finite-horizon dynamic programming over (position, elapsed steps).
///
/// Ties between the two actions resolve toward ADVANCE.
pub fn optimal_return_oracle(env: &EnvConfig, gamma: f64) -> Result<ChainSolution> {
    let params = match env {
        EnvConfig::DistractorChain(p) => p,
        other => return Err(Error::UnsupportedEnvironment(other.name().into())),
    };
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let n = params.length;
    let h = params.horizon;

    // value[t][p]: optimal discounted return from position p with t steps elapsed
    let mut value = vec![vec![0.0; n + 1]; h + 1];
    let mut policy = vec![vec![ADVANCE; n]; h];
    for t in (0..h).rev() {
        for p in 0..n {
            let advance = if p + 1 == n {
                params.goal_reward
            } else {
                gamma * value[t + 1][p + 1]
            };
            let collect = params.collect_reward + gamma * value[t + 1][p];
            if collect > advance {
                value[t][p] = collect;
                policy[t][p] = COLLECT;
            } else {
                value[t][p] = advance;
                policy[t][p] = ADVANCE;
            }
        }
    }

    let mut actions = Vec::new();
    let mut undiscounted = 0.0;
    let mut p = 0;
    let mut reached = false;
    for row in &policy {
        let a = row[p];
        actions.push(a);
        if a == COLLECT {
            undiscounted += params.collect_reward;
        } else {
            p += 1;
            if p == n {
                undiscounted += params.goal_reward;
                reached = true;
                break;
            }
        }
    }

    Ok(ChainSolution {
        gamma,
        label: if reached {
            PolicyLabel::FarSighted
        } else {
            PolicyLabel::Myopic
        },
        value: value[0][0],
        undiscounted_return: undiscounted,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DistractorChain {
        DistractorChain::new(ChainParams::default()).unwrap()
    }

    #[test]
    fn reset_starts_at_position_zero() {
        let mut env = chain();
        for seed in [0, 1, 99] {
            let obs = env.reset(seed);
            assert_eq!(obs[0], 1.0);
            assert_eq!(obs.iter().take(11).sum::<f64>(), 1.0);
            assert_eq!(obs[11], 0.0);
        }
    }

    #[test]
    fn advance_and_collect_dynamics() {
        let mut env = chain();
        env.reset(0);
        let s = env.step(ADVANCE).unwrap();
        assert_eq!((s.reward, env.position()), (0.0, 1));
        assert_eq!(s.observation[1], 1.0);
        let s = env.step(COLLECT).unwrap();
        assert_eq!((s.reward, env.position()), (0.05, 1));
        assert!(!s.done());
    }

    #[test]
    fn reaching_goal_terminates_with_goal_reward() {
        let mut env = chain();
        env.reset(0);
        for _ in 0..9 {
            assert!(!env.step(ADVANCE).unwrap().done());
        }
        let s = env.step(ADVANCE).unwrap();
        assert_eq!(s.reward, 1.0);
        assert!(s.terminated && !s.truncated);
        assert!(matches!(env.step(COLLECT), Err(Error::Usage(_))));
    }

    #[test]
    fn truncates_at_horizon() {
        let mut env = chain();
        env.reset(0);
        for i in 0..40 {
            let s = env.step(COLLECT).unwrap();
            assert_eq!(s.truncated, i == 39);
            assert!(!s.terminated);
        }
    }

    #[test]
    fn invalid_action_is_usage_error() {
        let mut env = chain();
        env.reset(0);
        assert!(matches!(env.step(2), Err(Error::Usage(_))));
    }

    #[test]
    fn oracle_labels_default_chain() {
        let cfg = EnvConfig::distractor_chain();
        let short = optimal_return_oracle(&cfg, 0.5).unwrap();
        assert_eq!(short.label, PolicyLabel::Myopic);
        assert!((short.undiscounted_return - 2.0).abs() < 1e-12);
        let long = optimal_return_oracle(&cfg, 0.999).unwrap();
        assert_eq!(long.label, PolicyLabel::FarSighted);
        // collect for 30 steps, then walk the 10 steps to the goal
        assert!((long.undiscounted_return - 2.5).abs() < 1e-12);
        assert_eq!(long.actions.iter().filter(|&&a| a == COLLECT).count(), 30);
    }

    #[test]
    fn oracle_rejects_lander() {
        assert!(matches!(
            optimal_return_oracle(&EnvConfig::mini_lander(), 0.9),
            Err(Error::UnsupportedEnvironment(_))
        ));
    }

    /// Best discounted return over every action sequence, and whether that
    /// sequence reaches the goal.
    fn brute_force(params: &ChainParams, gamma: f64) -> (f64, bool) {
        let h = params.horizon;
        let mut best = (f64::NEG_INFINITY, false);
        for mask in 0u32..(1 << h) {
            let (mut ret, mut disc, mut p, mut reached) = (0.0, 1.0, 0, false);
            for t in 0..h {
                if mask >> t & 1 == 1 {
                    ret += disc * params.collect_reward;
                } else {
                    p += 1;
                    if p == params.length {
                        ret += disc * params.goal_reward;
                        reached = true;
                        break;
                    }
                }
                disc *= gamma;
            }
            if ret > best.0 + 1e-12 {
                best = (ret, reached);
            }
        }
        best
    }

    #[test]
    fn oracle_agrees_with_enumeration_on_small_chains() {
        for length in 1..=3 {
            for horizon in [4usize, 8, 12] {
                let params = ChainParams {
                    length,
                    horizon,
                    ..ChainParams::default()
                };
                let cfg = EnvConfig::DistractorChain(params.clone());
                for gamma in [0.3, 0.5, 0.8, 0.9, 0.95, 0.99] {
                    let sol = optimal_return_oracle(&cfg, gamma).unwrap();
                    let (v, reached) = brute_force(&params, gamma);
                    assert!((sol.value - v).abs() < 1e-12, "N={length} H={horizon} g={gamma}");
                    assert_eq!(sol.label == PolicyLabel::FarSighted, reached);
                }
            }
        }
    }

    #[test]
    fn label_flips_once_across_gamma_sweep() {
        let cfg = EnvConfig::distractor_chain();
        let labels: Vec<_> = (0..=100)
            .map(|i| 0.5 + 0.499 * i as f64 / 100.0)
            .map(|g| optimal_return_oracle(&cfg, g).unwrap().label)
            .collect();
        assert_eq!(labels[0], PolicyLabel::Myopic);
        assert_eq!(labels[100], PolicyLabel::FarSighted);
        let flips = labels.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
    }
}
