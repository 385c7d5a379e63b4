//! Analyses that do not model misclassification: naive substitution,
//! complete-case IPD, a Bayesian mixed-effects logistic model, per-study
//! maximum likelihood and a two-stage aggregate-data meta-analysis.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, IpdDataset};
use crate::diagnostics::ParamSummary;
use crate::draws::{DrawsMatrix, DrawsMeta};
use crate::error::{Error, Result};
use crate::likelihood::inv_logit;
use crate::model::{Family, ModelSpec, OutcomeVariant, PriorConfig};
use crate::rng;
use crate::sampler::{fit, metropolis_accept, SamplerConfig, StepSizes};

/// Replaces every missing gold-standard exposure by the surrogate.
pub fn make_naive(d: &IpdDataset) -> Result<IpdDataset> {
    let mut out = d.clone();
    for (i, r) in out.records.iter_mut().enumerate() {
        if r.x.is_none() {
            r.x = Some(r.x_star.ok_or_else(|| {
                Error::Validation(format!("record {i}: neither x nor x_star observed"))
            })?);
        }
    }
    Ok(out)
}

/// Keeps records with an observed gold standard; studies left empty are
/// dropped and the rest renumbered in their original order.
pub fn make_complete_case(d: &IpdDataset) -> Result<IpdDataset> {
    let mut keep = vec![false; d.study_count()];
    for r in &d.records {
        if r.x.is_some() {
            keep[r.study] = true;
        }
    }
    let mut remap = vec![usize::MAX; d.study_count()];
    let mut labels = Vec::new();
    for (j, &k) in keep.iter().enumerate() {
        if k {
            remap[j] = labels.len();
            labels.push(d.study_labels[j].clone());
        }
    }
    if labels.is_empty() {
        return Err(Error::NoGoldStandard);
    }
    let records = d
        .records
        .iter()
        .filter(|r| r.x.is_some())
        .map(|r| {
            let mut r = r.clone();
            r.study = remap[r.study];
            r
        })
        .collect();
    Ok(IpdDataset { records, study_labels: labels, covariate_names: d.covariate_names.clone() })
}

/// Bayesian mixed-effects logistic regression of `y` on `x` and `z`, run by
/// the main sampler with the measurement and exposure submodels disabled.
pub fn fit_mixed_bayes(
    d: &IpdDataset,
    outcome: OutcomeVariant,
    priors: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<DrawsMatrix> {
    fit(&ModelSpec::outcome_only(outcome).with_priors(priors.clone()), d, cfg)
}

pub const MLE_TOLERANCE: f64 = 1e-8;
pub const MLE_MAX_ITER: usize = 50;
pub const MLE_COEF_LIMIT: f64 = 15.0;

/// Coefficients in the order intercept, x, z1..zK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub iterations: usize,
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..=r {
            let mut s = a[r * n + c];
            for p in 0..c {
                s -= l[r * n + p] * l[c * n + p];
            }
            if r == c {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[r * n + c] = s.sqrt();
            } else {
                l[r * n + c] = s / l[c * n + c];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for r in 0..n {
        for p in 0..r {
            y[r] -= l[r * n + p] * y[p];
        }
        y[r] /= l[r * n + r];
    }
    for r in (0..n).rev() {
        for p in r + 1..n {
            y[r] -= l[p * n + r] * y[p];
        }
        y[r] /= l[r * n + r];
    }
    y
}

/// Newton–Raphson logistic regression of `y` on `(1, x, z)` within one study.
pub fn per_study_mle(d: &IpdDataset, include_covariates: bool) -> Result<MleFit> {
    let k = if include_covariates { d.covariate_count() } else { 0 };
    let p = 2 + k;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d.len());
    for (i, r) in d.records.iter().enumerate() {
        let (Some(y), Some(x)) = (r.y, r.x) else {
            return Err(Error::Validation(format!("record {i}: per-study fit needs observed y and x")));
        };
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.push(x as u8 as f64);
        row.extend_from_slice(&r.z[..k]);
        rows.push((row, y as u8 as f64));
    }
    let mut beta = vec![0.0; p];
    for iter in 0..=MLE_MAX_ITER {
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        for (row, y) in &rows {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = inv_logit(eta);
            let w = mu * (1.0 - mu);
            for a in 0..p {
                score[a] += row[a] * (y - mu);
                for b in 0..=a {
                    info[a * p + b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[b * p + a] = info[a * p + b];
            }
        }
        let l = cholesky(&info, p).ok_or_else(|| Error::UnstableFit("singular information matrix".into()))?;
        if score.iter().all(|s| s.abs() < MLE_TOLERANCE) {
            let se = (0..p)
                .map(|a| {
                    let mut e = vec![0.0; p];
                    e[a] = 1.0;
                    cholesky_solve(&l, p, &e)[a].sqrt()
                })
                .collect();
            return Ok(MleFit { coef: beta, se, iterations: iter });
        }
        if iter == MLE_MAX_ITER {
            break;
        }
        let step = cholesky_solve(&l, p, &score);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if beta.iter().any(|b| !b.is_finite() || b.abs() > MLE_COEF_LIMIT) {
            return Err(Error::UnstableFit("coefficient diverged (separation)".into()));
        }
    }
    Err(Error::UnstableFit(format!("no convergence in {MLE_MAX_ITER} iterations")))
}

/// Exposure log odds ratio of one study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyEstimate {
    pub study: usize,
    pub est: f64,
    pub se: f64,
}

/// Per-study exposure estimates over every study of `d`. Studies whose fit
/// is unstable are left out; their indices are returned separately.
pub fn study_estimates(d: &IpdDataset, include_covariates: bool) -> (Vec<StudyEstimate>, Vec<usize>) {
    let fits: Vec<(usize, Result<MleFit>)> = (0..d.study_count())
        .into_par_iter()
        .map(|j| (j, per_study_mle(&d.study_subset(j), include_covariates)))
        .collect();
    let mut ok = Vec::new();
    let mut unstable = Vec::new();
    for (j, f) in fits {
        match f {
            Ok(f) => ok.push(StudyEstimate { study: j, est: f.coef[1], se: f.se[1] }),
            Err(_) => unstable.push(j),
        }
    }
    (ok, unstable)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmetaFit {
    pub mu: ParamSummary,
    pub tau: ParamSummary,
    pub draws: DrawsMatrix,
    pub studies_used: usize,
}

/// Inverse-variance weighted mean and its standard error.
pub fn inverse_variance_pool(estimates: &[StudyEstimate]) -> (f64, f64) {
    let w: f64 = estimates.iter().map(|e| e.se.powi(-2)).sum();
    let m = estimates.iter().map(|e| e.est * e.se.powi(-2)).sum::<f64>() / w;
    (m, w.sqrt().recip())
}

fn marginal_ln(estimates: &[StudyEstimate], mu: f64, tau: f64) -> f64 {
    estimates
        .iter()
        .map(|e| {
            let v = e.se * e.se + tau * tau;
            -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (e.est - mu).powi(2) / v)
        })
        .sum()
}

/// Normal–normal random-effects meta-analysis: `est_j ~ N(theta_j, se_j^2)`,
/// `theta_j ~ N(mu, tau^2)`, with `mu ~ N(0, coef_sd^2)` and the `beta2`
/// heterogeneity prior of `priors`. The study effects are integrated out:
/// `mu` is drawn from its normal full conditional and `log tau` by random-walk
/// Metropolis. `fixed_tau` pins `tau`.
pub fn admeta_random_effects(
    estimates: &[StudyEstimate],
    priors: &PriorConfig,
    cfg: &SamplerConfig,
    fixed_tau: Option<f64>,
) -> Result<AdmetaFit> {
    if estimates.len() < 2 {
        return Err(Error::TooFewStudies { needed: 2, have: estimates.len() });
    }
    cfg.validate()?;
    let mu_prec = priors.coef_sd(Family::Beta2).powi(-2);
    let het = priors.heterogeneity(Family::Beta2);
    let run = |c: usize| -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(cfg.seed, &[rng::META_DOMAIN, c as u64]);
        let mut tau = fixed_tau.unwrap_or(0.1 + 0.1 * r.random::<f64>());
        let mut steps = StepSizes::new(vec![0.5], cfg.target_accept);
        let target = |mu: f64, tau: f64| marginal_ln(estimates, mu, tau) + het.log_density(tau) + tau.ln();
        let (mut mus, mut taus) = (Vec::new(), Vec::new());
        let burn = cfg.adapt_n + cfg.warmup_n;
        for t in 1..=burn + cfg.keep_n {
            let (mut prec, mut num) = (mu_prec, 0.0);
            for e in estimates {
                let w = (e.se * e.se + tau * tau).recip();
                prec += w;
                num += w * e.est;
            }
            let mu = num / prec + prec.sqrt().recip() * r.sample::<f64, _>(StandardNormal);
            if fixed_tau.is_none() {
                let prop = tau * (steps.sd(0) * r.sample::<f64, _>(StandardNormal)).exp();
                let ok = metropolis_accept(target(mu, prop) - target(mu, tau), r.random());
                if ok {
                    tau = prop;
                }
                if t <= cfg.adapt_n {
                    steps.adapt(0, ok as u8 as f64, t);
                }
            }
            if t > burn && (t - burn) % cfg.thin == 0 {
                mus.push(mu);
                taus.push(tau);
            }
        }
        (mus, taus)
    };
    let chains: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.chains).into_par_iter().map(run).collect();
    let mu_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.0.clone()).collect();
    let tau_chains: Vec<Vec<f64>> = chains.iter().map(|c| c.1.clone()).collect();
    let draws = DrawsMatrix::from_columns(
        vec!["mu".into(), "tau".into()],
        chains.into_iter().map(|(m, t)| vec![m, t]).collect(),
        DrawsMeta { seed: cfg.seed, adaptation_n: cfg.adapt_n, warmup_n: cfg.warmup_n, thin_factor: cfg.thin },
    );
    Ok(AdmetaFit {
        mu: ParamSummary::from_chains("mu", &mu_chains),
        tau: ParamSummary::from_chains("tau", &tau_chains),
        draws,
        studies_used: estimates.len(),
    })
}

/// Validates `d` and runs the two-stage analysis over its studies.
pub fn two_stage(
    d: &IpdDataset,
    include_covariates: bool,
    priors: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<(AdmetaFit, Vec<usize>)> {
    validate_dataset(d).into_result()?;
    let (est, unstable) = study_estimates(d, include_covariates);
    Ok((admeta_random_effects(&est, priors, cfg, None)?, unstable))
}
