//! Actor-side advantage strategies over the critic's discount heads.
//!
//! * `attention`: a learned state-dependent softmax router mixes the raw head
//!   advantages. The mixture is differentiable in the router logits, so the
//!   PPO surrogate gradient reaches the router through
//!   `dA_w/dz_j = w_j (A_j - A_w)`.
//! * `error`: weights are a softmax over `-|delta_i| / tau`, held constant.
//! * `decoupled` / `long_only`: the actor sees only the long-horizon head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::{GammaSet, MultiGammaAdvantages};
use crate::error::{check_dim, Error, Result};
use crate::nn::DenseNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorMode {
    Attention,
    Error,
    Decoupled,
    /// Decoupled actor with the auxiliary critic heads switched off.
    LongOnly,
}

impl ActorMode {
    pub const ALL: [ActorMode; 4] = [
        ActorMode::Attention,
        ActorMode::Error,
        ActorMode::Decoupled,
        ActorMode::LongOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActorMode::Attention => "attention",
            ActorMode::Error => "error",
            ActorMode::Decoupled => "decoupled",
            ActorMode::LongOnly => "long_only",
        }
    }
}

impl fmt::Display for ActorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActorMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown actor mode `{s}`")))
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `sum_i w_i a_i`
pub fn mix(weights: &[f64], advantages: &[f64]) -> f64 {
    weights.iter().zip(advantages).map(|(w, a)| w * a).sum()
}

/// Derivative of the routed advantage with respect to each router logit,
/// `w_j (a_j - sum_i w_i a_i)`.
///
/// Evaluated as `w_j sum_i w_i (a_j - a_i)`, which is the same quantity on the
/// simplex but is exactly zero whenever all heads agree.
pub fn routed_logit_gradient(weights: &[f64], advantages: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(advantages)
        .map(|(wj, aj)| {
            wj * weights
                .iter()
                .zip(advantages)
                .map(|(wi, ai)| wi * (aj - ai))
                .sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterOutput {
    /// `weights[t][i]`, each row on the simplex.
    pub weights: Vec<Vec<f64>>,
    /// Routed scalar advantage per sample.
    pub routed: Vec<f64>,
    /// `d routed[t] / d z[t][j]`; present for the attention router only.
    pub logit_grads: Option<Vec<Vec<f64>>>,
}

fn route_with_weights(adv: &MultiGammaAdvantages, weights: Vec<Vec<f64>>) -> RouterOutput {
    let routed = weights
        .iter()
        .enumerate()
        .map(|(t, w)| mix(w, &adv.sample(t)))
        .collect();
    RouterOutput {
        weights,
        routed,
        logit_grads: None,
    }
}

pub fn route_attention(adv: &MultiGammaAdvantages, logits: &[Vec<f64>]) -> Result<RouterOutput> {
    check_dim("router logits per sample", adv.len(), logits.len())?;
    adv.check_finite()?;
    let mut weights = Vec::with_capacity(logits.len());
    let mut routed = Vec::with_capacity(logits.len());
    let mut grads = Vec::with_capacity(logits.len());
    for (t, z) in logits.iter().enumerate() {
        check_dim("router logits", adv.heads(), z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("router logits".into()));
        }
        let a = adv.sample(t);
        let w = softmax(z);
        let r = mix(&w, &a);
        grads.push(routed_logit_gradient(&w, &a));
        routed.push(r);
        weights.push(w);
    }
    Ok(RouterOutput {
        weights,
        routed,
        logit_grads: Some(grads),
    })
}

/// Gradient-free routing toward heads with small one-step error:
/// `w_i ∝ exp(-|delta_i| / tau)`. `abs_td` is indexed `[head][t]`.
pub fn route_by_error(
    adv: &MultiGammaAdvantages,
    abs_td: &[Vec<f64>],
    tau: f64,
) -> Result<RouterOutput> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("error-routing temperature must be > 0, got {tau}")));
    }
    check_dim("td error heads", adv.heads(), abs_td.len())?;
    adv.check_finite()?;
    for head in abs_td {
        check_dim("td errors per head", adv.len(), head.len())?;
        if head.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Domain("td errors must be finite absolute values".into()));
        }
    }
    let weights = (0..adv.len())
        .map(|t| {
            let z: Vec<f64> = abs_td.iter().map(|h| -h[t] / tau).collect();
            softmax(&z)
        })
        .collect();
    Ok(route_with_weights(adv, weights))
}

/// One-hot on the long-horizon head; the routed value is that head verbatim.
pub fn route_decoupled(adv: &MultiGammaAdvantages, gammas: &GammaSet) -> Result<RouterOutput> {
    check_dim("advantage heads", gammas.len(), adv.heads())?;
    let long = gammas.long_index();
    let mut one_hot = vec![0.0; gammas.len()];
    one_hot[long] = 1.0;
    Ok(RouterOutput {
        weights: vec![one_hot; adv.len()],
        routed: adv.head(long).to_vec(),
        logit_grads: None,
    })
}

/// State-dependent router: observation -> one logit per discount head.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterHead {
    pub net: DenseNet,
}

impl RouterHead {
    pub fn new<R: Rng + ?Sized>(
        observation_dim: usize,
        heads: usize,
        hidden: &[usize],
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            net: DenseNet::mlp(observation_dim, hidden, heads, output_gain, rng)?,
        })
    }

    pub fn heads(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(observation)
    }

    pub fn weights(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(observation)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adv_from_samples(samples: &[Vec<f64>]) -> MultiGammaAdvantages {
        let k = samples[0].len();
        let advantages: Vec<Vec<f64>> =
            (0..k).map(|i| samples.iter().map(|s| s[i]).collect()).collect();
        MultiGammaAdvantages {
            targets: advantages.clone(),
            advantages,
            lambda: 0.95,
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn softmax_cases() {
        assert!(close(&softmax(&[0.0; 4]), &[0.25; 4], 1e-15));
        assert!(close(&softmax(&[2f64.ln(), 0.0, 0.0, 0.0]), &[0.4, 0.2, 0.2, 0.2], 1e-15));
        let w = softmax(&[1000.0, 0.0, 0.0, 0.0]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn attention_uniform_example() {
        let adv = adv_from_samples(&[vec![1.0, 0.0, 0.0, 0.0]]);
        let out = route_attention(&adv, &[vec![0.0; 4]]).unwrap();
        assert_eq!(out.routed, vec![0.25]);
        let g = &out.logit_grads.unwrap()[0];
        assert!((g[0] - 0.1875).abs() < 1e-15);
        assert!((g[1] + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn attention_at_simplex_vertex_has_no_gradient() {
        let adv = adv_from_samples(&[vec![3.0, -1.0, 0.5, 2.0]]);
        let out = route_attention(&adv, &[vec![0.0, 0.0, 800.0, 0.0]]).unwrap();
        assert!((out.routed[0] - 0.5).abs() < 1e-12);
        assert!(out.logit_grads.unwrap()[0].iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn identical_heads_give_zero_gradient() {
        let adv = adv_from_samples(&[vec![1.7; 4], vec![-0.3; 4]]);
        let out = route_attention(&adv, &[vec![0.3, -1.0, 2.0, 0.1], vec![0.0; 4]]).unwrap();
        for g in out.logit_grads.unwrap() {
            assert!(g.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn attention_rejects_nan() {
        let adv = adv_from_samples(&[vec![f64::NAN, 0.0, 0.0, 0.0]]);
        assert!(route_attention(&adv, &[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn error_routing_cases() {
        let adv = adv_from_samples(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let out = route_by_error(&adv, &[vec![0.3], vec![0.3], vec![0.3], vec![0.3]], 1.0).unwrap();
        assert!(close(&out.weights[0], &[0.25; 4], 1e-15));
        assert!(out.logit_grads.is_none());

        let tau = 0.7;
        let two = adv_from_samples(&[vec![1.0, 0.0]]);
        let out = route_by_error(&two, &[vec![0.0], vec![tau * 3f64.ln()]], tau).unwrap();
        assert!(close(&out.weights[0], &[0.75, 0.25], 1e-12));

        let out = route_by_error(
            &adv,
            &[vec![0.0], vec![10.0 * tau], vec![10.0 * tau], vec![10.0 * tau]],
            tau,
        )
        .unwrap();
        assert!(out.weights[0][0] > 0.99);
        assert!((out.routed[0] - mix(&out.weights[0], &[1.0, 2.0, 3.0, 4.0])).abs() < 1e-15);
    }

    #[test]
    fn error_routing_rejects_bad_temperature() {
        let adv = adv_from_samples(&[vec![1.0, 0.0]]);
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                route_by_error(&adv, &[vec![0.0], vec![0.0]], tau),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn decoupled_selects_long_head() {
        let adv = adv_from_samples(&[vec![5.0, 4.0, 3.0, 2.0], vec![-1.0, 0.0, 9.0, 7.5]]);
        let out = route_decoupled(&adv, &GammaSet::default()).unwrap();
        assert_eq!(out.routed, vec![2.0, 7.5]);
        assert!(out.weights.iter().all(|w| w == &vec![0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in ActorMode::ALL {
            assert_eq!(m.as_str().parse::<ActorMode>().unwrap(), m);
        }
        assert!("router".parse::<ActorMode>().is_err());
    }
}
