//! Per-discount advantage estimation.
//!
//! Every critic head `i` has its own discount `gamma_i`. For each head the GAE
//! estimate is the `(gamma_i * lambda)`-weighted sum of one-step residuals
//! `delta_t = r_t + gamma_i * V_i(s_{t+1}) - V_i(s_t)`, computed by a backward
//! recursion that restarts at every episode boundary. Value targets are
//! `A + V` (lambda-returns).
//!
//! Heads are never rescaled here. Only the scalar advantage that finally reaches
//! the policy loss goes through [`batch_normalize`].

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ppo::Trajectory;

pub const DEFAULT_GAMMAS: [f64; 4] = [0.5, 0.9, 0.99, 0.999];
pub const DEFAULT_LAMBDA: f64 = 0.95;
pub const NORMALIZE_EPS: f64 = 1e-8;

/// Strictly increasing discount factors in `(0, 1)`. The last one is the
/// long-horizon head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaSet {
    gammas: Vec<f64>,
}

impl GammaSet {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::Config("gamma set must not be empty".into()));
        }
        if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::Domain(format!("discount {g} outside (0, 1)")));
        }
        if gammas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("gamma set must be strictly increasing".into()));
        }
        Ok(Self { gammas })
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gammas
    }

    pub fn long_index(&self) -> usize {
        self.gammas.len() - 1
    }

    pub fn long_gamma(&self) -> f64 {
        self.gammas[self.long_index()]
    }
}

impl Default for GammaSet {
    fn default() -> Self {
        Self {
            gammas: DEFAULT_GAMMAS.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for GammaSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GammaSet> for Vec<f64> {
    fn from(g: GammaSet) -> Self {
        g.gammas
    }
}

/// Per-head advantages and value targets, indexed `[head][timestep]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGammaAdvantages {
    pub advantages: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl MultiGammaAdvantages {
    pub fn heads(&self) -> usize {
        self.advantages.len()
    }

    pub fn len(&self) -> usize {
        self.advantages.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self, i: usize) -> &[f64] {
        &self.advantages[i]
    }

    /// Advantages of every head at timestep `t`.
    pub fn sample(&self, t: usize) -> Vec<f64> {
        self.advantages.iter().map(|h| h[t]).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.advantages.iter().flatten().all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("advantage estimates".into()))
        }
    }
}

fn check_trajectory(traj: &Trajectory, gammas: &GammaSet) -> Result<()> {
    let t = traj.len();
    check_dim("trajectory values", t, traj.values.len())?;
    check_dim("trajectory next values", t, traj.next_values.len())?;
    for (v, nv) in traj.values.iter().zip(&traj.next_values) {
        check_dim("value heads", gammas.len(), v.len())?;
        check_dim("next value heads", gammas.len(), nv.len())?;
    }
    let finite = traj
        .values
        .iter()
        .chain(&traj.next_values)
        .flatten()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("critic values in trajectory".into()));
    }
    Ok(())
}

pub fn compute_gae(
    traj: &Trajectory,
    gammas: &GammaSet,
    lambda: f64,
) -> Result<MultiGammaAdvantages> {
    check_trajectory(traj, gammas)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda {lambda} outside [0, 1]")));
    }
    let t_len = traj.len();
    let mut advantages = Vec::with_capacity(gammas.len());
    let mut targets = Vec::with_capacity(gammas.len());
    for (i, &gamma) in gammas.as_slice().iter().enumerate() {
        let mut adv = vec![0.0; t_len];
        let mut running = 0.0;
        for t in (0..t_len).rev() {
            // next_values is already zero after a termination
            let delta = traj.rewards[t] + gamma * traj.next_values[t][i] - traj.values[t][i];
            let carry = if traj.episode_end(t) { 0.0 } else { running };
            running = delta + gamma * lambda * carry;
            adv[t] = running;
        }
        let tgt = adv
            .iter()
            .zip(&traj.values)
            .map(|(a, v)| a + v[i])
            .collect();
        advantages.push(adv);
        targets.push(tgt);
    }
    Ok(MultiGammaAdvantages {
        advantages,
        targets,
        lambda,
    })
}

/// One-step residuals `delta[head][t]` under the critic values stored in the
/// trajectory.
pub fn td_errors(traj: &Trajectory, gammas: &GammaSet) -> Result<Vec<Vec<f64>>> {
    check_trajectory(traj, gammas)?;
    Ok(gammas
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &gamma)| {
            (0..traj.len())
                .map(|t| traj.rewards[t] + gamma * traj.next_values[t][i] - traj.values[t][i])
                .collect()
        })
        .collect())
}

/// Magnitude bound on a discounted value when `|r| <= r_max`: `r_max / (1 - gamma)`,
/// or `r_max (1 - gamma^H) / (1 - gamma)` over a finite horizon `H`.
pub fn value_bound(r_max: f64, gamma: f64, horizon: Option<u32>) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if r_max < 0.0 || !r_max.is_finite() {
        return Err(Error::Domain(format!("r_max must be finite and >= 0, got {r_max}")));
    }
    Ok(match horizon {
        None => r_max / (1.0 - gamma),
        Some(h) => r_max * (1.0 - gamma.powi(h as i32)) / (1.0 - gamma),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBatch {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the input.
    pub std: f64,
    /// Set when the input was (numerically) constant and zeros were returned.
    pub degenerate: bool,
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
/// A batch with `std <= 1e-8` maps to zeros and is flagged `degenerate`.
pub fn batch_normalize(values: &[f64]) -> Result<NormalizedBatch> {
    if values.len() < 2 {
        return Err(Error::Usage(format!(
            "batch normalization needs at least 2 samples, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !std.is_finite() {
        return Err(Error::NonFinite("batch to normalize".into()));
    }
    if std <= NORMALIZE_EPS {
        return Ok(NormalizedBatch {
            values: vec![0.0; values.len()],
            mean,
            std,
            degenerate: true,
        });
    }
    Ok(NormalizedBatch {
        values: values.iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_head_traj(rewards: &[f64], ends: &[bool]) -> Trajectory {
        let t = rewards.len();
        Trajectory {
            observations: vec![vec![0.0]; t],
            actions: vec![0; t],
            log_probs: vec![0.0; t],
            rewards: rewards.to_vec(),
            values: vec![vec![0.0]; t],
            next_values: vec![vec![0.0]; t],
            terminated: ends.to_vec(),
            truncated: vec![false; t],
            ..Trajectory::default()
        }
    }

    fn gammas(g: f64) -> GammaSet {
        GammaSet::new(vec![g]).unwrap()
    }

    #[test]
    fn gamma_set_validation() {
        assert!(GammaSet::new(vec![0.5, 0.9, 0.99, 0.999]).is_ok());
        assert!(GammaSet::new(vec![0.9, 0.5]).is_err());
        assert!(GammaSet::new(vec![0.5, 0.5]).is_err());
        assert!(GammaSet::new(vec![0.5, 1.0]).is_err());
        assert!(GammaSet::new(vec![]).is_err());
        let d = GammaSet::default();
        assert_eq!(d.long_index(), 3);
        assert_eq!(d.long_gamma(), 0.999);
    }

    #[test]
    fn single_step_advantage_is_reward() {
        for g in [0.5, 0.99] {
            for lambda in [0.0, 0.95, 1.0] {
                let traj = single_head_traj(&[1.0], &[true]);
                let adv = compute_gae(&traj, &gammas(g), lambda).unwrap();
                assert_eq!(adv.advantages[0], vec![1.0]);
            }
        }
    }

    #[test]
    fn two_step_lambda_one_is_discounted_return() {
        let traj = single_head_traj(&[1.0, 1.0], &[false, true]);
        let adv = compute_gae(&traj, &gammas(0.5), 1.0).unwrap();
        assert_eq!(adv.advantages[0], vec![1.5, 1.0]);
    }

    #[test]
    fn two_step_lambda_zero_is_td_residual() {
        let traj = single_head_traj(&[1.0, 1.0], &[false, true]);
        let adv = compute_gae(&traj, &gammas(0.5), 0.0).unwrap();
        assert_eq!(adv.advantages[0], vec![1.0, 1.0]);
    }

    #[test]
    fn trace_restarts_at_episode_boundary() {
        let traj = single_head_traj(&[1.0, 1.0, 1.0], &[false, true, true]);
        let adv = compute_gae(&traj, &gammas(0.5), 1.0).unwrap();
        assert_eq!(adv.advantages[0], vec![1.5, 1.0, 1.0]);
    }

    #[test]
    fn truncation_bootstraps_from_next_value() {
        let mut traj = single_head_traj(&[0.0], &[false]);
        traj.truncated = vec![true];
        traj.next_values = vec![vec![2.0]];
        let adv = compute_gae(&traj, &gammas(0.5), 0.95).unwrap();
        assert_eq!(adv.advantages[0], vec![1.0]);
        assert_eq!(adv.targets[0], vec![1.0]);
    }

    #[test]
    fn nan_value_aborts() {
        let mut traj = single_head_traj(&[1.0], &[true]);
        traj.values[0][0] = f64::NAN;
        assert!(matches!(
            compute_gae(&traj, &gammas(0.5), 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn head_count_must_match() {
        let traj = single_head_traj(&[1.0], &[true]);
        assert!(compute_gae(&traj, &GammaSet::default(), 1.0).is_err());
    }

    #[test]
    fn value_bound_cases() {
        assert_eq!(value_bound(1.0, 0.5, None).unwrap(), 2.0);
        assert_eq!(value_bound(1.0, 0.5, Some(2)).unwrap(), 1.5);
        for g in [0.1, 0.5, 0.999] {
            assert_eq!(value_bound(0.0, g, None).unwrap(), 0.0);
            assert_eq!(value_bound(0.0, g, Some(7)).unwrap(), 0.0);
        }
        assert!(matches!(value_bound(1.0, 1.0, None), Err(Error::Domain(_))));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(batch_normalize(&[1.0, -1.0]).unwrap().values, vec![1.0, -1.0]);

        let flat = batch_normalize(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(flat.values, vec![0.0; 3]);
        assert!(flat.degenerate);

        let out = batch_normalize(&[0.0, 1.0, 2.0, 3.0]).unwrap().values;
        let n = out.len() as f64;
        let mean = out.iter().sum::<f64>() / n;
        let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((std - 1.0).abs() < 1e-12);

        assert!(batch_normalize(&[1.0]).is_err());
    }
}
