//! Convergence and precision diagnostics.
//!
//! * `split_rhat` — potential scale reduction on half-chains. Values below 1
//!   (sampling noise in the between-chain variance) are reported as 1.
//! * `ess` — multi-chain effective sample size using Geyer's initial
//!   positive sequence with the monotone correction, capped at
//!   `1.05 * total draws`.
//! * Quantiles use linear interpolation between order statistics
//!   (Hyndman–Fan type 7): `h = (n - 1) p`, `q = x[floor h] + frac(h) (x[floor h + 1] - x[floor h])`.

use serde::{Deserialize, Serialize};

use crate::draws::DrawsMatrix;
use crate::error::{Error, Result};

pub const MIN_SPLIT_DRAWS: usize = 4;
pub const MIN_ESS_DRAWS: usize = 100;
pub const ESS_CAP: f64 = 1.05;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn equal_length(chains: &[Vec<f64>]) -> (usize, Vec<&[f64]>) {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    (n, chains.iter().map(|c| &c[..n]).collect())
}

pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let (n, chains) = equal_length(chains);
    let half = n / 2;
    if chains.is_empty() || half < MIN_SPLIT_DRAWS {
        return Err(Error::TooFewDraws { needed: 2 * MIN_SPLIT_DRAWS, have: n });
    }
    let mut splits: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in &chains {
        splits.push(&c[..half]);
        splits.push(&c[n - half..]);
    }
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = mean(&splits.iter().map(|s| variance(s)).collect::<Vec<_>>());
    let b_over_n = variance(&means);
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt().max(1.0))
}

fn autocovariance(chain: &[f64], chain_mean: f64, lag: usize) -> f64 {
    let n = chain.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (chain[t] - chain_mean) * (chain[t + lag] - chain_mean);
    }
    s / n as f64
}

/// Effective sample size of all chains together. A constant input yields 0.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let (n, chains) = equal_length(chains);
    let m = chains.len();
    let total = n * m;
    if total < MIN_ESS_DRAWS || n < 4 {
        return Err(Error::TooFewDraws { needed: MIN_ESS_DRAWS, have: total });
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, 0)).collect();
    let mean_var = mean(&acov0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return Ok(0.0);
    }
    let rho = |lag: usize| -> f64 {
        let ac: f64 =
            chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (mean_var - ac) / var_plus
    };

    // Geyer initial positive sequence over pairs (rho_2k + rho_2k+1), made
    // monotone non-increasing.
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let even = if t == 0 { 1.0 } else { rho(t) };
        let odd = rho(t + 1);
        let mut pair = even + odd;
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (total as f64).log10());
    let ess = total as f64 / tau;
    Ok(ess.min(ESS_CAP * total as f64))
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// `None` when there are too few draws to compute it.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

impl ParamSummary {
    pub fn from_chains(name: &str, chains: &[Vec<f64>]) -> Self {
        let mut pooled: Vec<f64> = chains.concat();
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len();
        let mu = mean(&pooled);
        let sd = if n > 1 { variance(&pooled).sqrt() } else { 0.0 };
        Self {
            name: name.to_string(),
            median: quantile_sorted(&pooled, 0.5),
            mean: mu,
            sd,
            ci95_low: quantile_sorted(&pooled, 0.025),
            ci95_high: quantile_sorted(&pooled, 0.975),
            rhat: split_rhat(chains).ok(),
            ess: ess(chains).ok(),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci95_low <= value && value <= self.ci95_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Monitored parameters whose R-hat exceeds `threshold`.
    pub fn rhat_breaches(&self, threshold: f64) -> Vec<&ParamSummary> {
        self.params.iter().filter(|p| p.rhat.is_some_and(|r| r > threshold)).collect()
    }
}

/// Per-parameter summary of every monitored quantity.
pub fn summarize(draws: &DrawsMatrix) -> PosteriorSummary {
    let params = draws
        .monitored
        .iter()
        .enumerate()
        .map(|(k, name)| ParamSummary::from_chains(name, &draws.chains_of(k)))
        .collect();
    PosteriorSummary { params }
}
