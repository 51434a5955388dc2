//! Per-update diagnostics (HackRate, router entropy, head weights, long-head
//! advantage variance) and across-seed reliability statistics.

use serde::{Deserialize, Serialize};

use crate::advantage::MultiGammaAdvantages;
use crate::error::{check_dim, Error, Result};

/// Fraction of training, counted from the end, used for final-return statistics.
pub const RELIABILITY_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub update: usize,
    pub mean_return: f64,
    /// Absent for an empty batch.
    pub hack_rate: Option<f64>,
    /// Mean over samples of the per-sample router entropy.
    pub router_entropy: f64,
    pub weight_means: Vec<f64>,
    pub long_adv_var: Option<f64>,
    pub policy_entropy: f64,
    pub diverged: bool,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose most-weighted head is also the head with the
/// largest advantage. Both arguments are indexed `[t][head]`.
pub fn hack_rate(weights: &[Vec<f64>], advantages: &[Vec<f64>]) -> Result<Option<f64>> {
    check_dim("hack rate samples", weights.len(), advantages.len())?;
    if weights.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for (w, a) in weights.iter().zip(advantages) {
        check_dim("hack rate heads", w.len(), a.len())?;
        if argmax(w) == argmax(a) {
            hits += 1;
        }
    }
    Ok(Some(hits as f64 / weights.len() as f64))
}

/// [`hack_rate`] against advantages stored head-major.
pub fn hack_rate_for(weights: &[Vec<f64>], adv: &MultiGammaAdvantages) -> Result<Option<f64>> {
    let per_sample: Vec<Vec<f64>> = (0..adv.len()).map(|t| adv.sample(t)).collect();
    hack_rate(weights, &per_sample)
}

/// `-sum w ln w` with `0 ln 0 = 0`.
pub fn router_entropy(weights: &[f64]) -> f64 {
    weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| -w * w.ln())
        .sum::<f64>()
        + 0.0
}

pub fn mean_router_entropy(weights: &[Vec<f64>]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    weights.iter().map(|w| router_entropy(w)).sum::<f64>() / weights.len() as f64
}

pub fn weight_means(weights: &[Vec<f64>], heads: usize) -> Vec<f64> {
    let mut means = vec![0.0; heads];
    if weights.is_empty() {
        return means;
    }
    for w in weights {
        for (m, v) in means.iter_mut().zip(w) {
            *m += v;
        }
    }
    let n = weights.len() as f64;
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Unbiased sample variance; `None` for fewer than two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

pub fn long_adv_variance(adv: &MultiGammaAdvantages, long_index: usize) -> Option<f64> {
    adv.advantages.get(long_index).and_then(|h| sample_variance(h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurve {
    pub returns: Vec<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySummary {
    pub per_seed: Vec<f64>,
    pub diverged: Vec<bool>,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    pub worst: f64,
}

/// Mean of the trailing `ceil(window_fraction * len)` entries.
pub fn window_mean(returns: &[f64], window_fraction: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Usage("return curve is empty".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let n = ((window_fraction * returns.len() as f64).ceil() as usize).clamp(1, returns.len());
    let tail = &returns[returns.len() - n..];
    Ok(tail.iter().sum::<f64>() / n as f64)
}

/// Per-seed trailing-window means and their spread. A diverged seed
/// contributes its last recorded return.
pub fn reliability_summary(runs: &[SeedCurve], window_fraction: f64) -> Result<ReliabilitySummary> {
    if runs.is_empty() {
        return Err(Error::Usage("reliability summary needs at least one seed".into()));
    }
    let per_seed = runs
        .iter()
        .map(|r| {
            if r.diverged {
                r.returns
                    .last()
                    .copied()
                    .ok_or_else(|| Error::Usage("return curve is empty".into()))
            } else {
                window_mean(&r.returns, window_fraction)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let std = sample_variance(&per_seed).map_or(0.0, f64::sqrt);
    let worst = per_seed.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ReliabilitySummary {
        diverged: runs.iter().map(|r| r.diverged).collect(),
        per_seed,
        mean,
        std,
        worst,
    })
}
