//! Synthetic IPD meta-analysis datasets.
//!
//! Two generators are provided: the dengue example (binary covariate joint
//! pain, exposure muscle pain, outcome dengue) and the simulation-study
//! design with `K` continuous covariates. Both return the full data and an
//! observed copy in which the gold-standard exposure of some studies has
//! been removed.
//!
//! Randomness: study-level parameters come from stream
//! `[STUDY_PARAMS_DOMAIN]`; the records of study `j` from
//! `[STUDY_DOMAIN, j]`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{IpdDataset, ParticipantRecord};
use crate::error::{Error, Result};
use crate::likelihood::{inv_logit, logit};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DengueScenarioConfig {
    pub scenario: u8,
    pub studies: usize,
    pub per_study: usize,
    /// Overall prevalence of the covariate (joint pain).
    pub covariate_prevalence: f64,
    /// Between-study SD of the covariate prevalence on the logit scale.
    pub covariate_logit_sd: f64,
    pub gamma00: f64,
    pub gamma1: f64,
    pub gamma0j_sd: f64,
    pub beta00: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta0j_sd: f64,
    pub beta2j_sd: f64,
    pub lambda00: f64,
    /// Variance (not SD) of the study-level sensitivity intercepts.
    pub lambda0j_var: f64,
    pub lambda1: f64,
    pub phi00: f64,
    pub phi0j_var: f64,
    pub phi1: f64,
    /// The gold standard is removed from studies `0..masked_studies`.
    pub masked_studies: usize,
}

impl DengueScenarioConfig {
    pub fn scenario(scenario: u8) -> Result<Self> {
        let (beta0j_sd, beta2j_sd) = match scenario {
            1 => (0.0, 0.0),
            2 => (0.25, 0.0),
            3 => (0.25, 0.15),
            _ => return Err(Error::Config(format!("dengue scenario must be 1, 2 or 3, got {scenario}"))),
        };
        Ok(Self {
            scenario,
            studies: 10,
            per_study: 700,
            covariate_prevalence: 0.414,
            covariate_logit_sd: 0.1,
            gamma00: -1.70,
            gamma1: 4.26,
            gamma0j_sd: 0.25,
            beta00: -0.26,
            beta1: -0.06,
            beta2: 0.78,
            beta0j_sd,
            beta2j_sd,
            lambda00: 3.0,
            lambda0j_var: 1.0,
            lambda1: -2.0,
            phi00: -3.0,
            phi0j_var: 1.0,
            phi1: 2.0,
            masked_studies: 5,
        })
    }
}

/// A generated dataset with and without the gold-standard mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub full: IpdDataset,
    pub observed: IpdDataset,
}

#[inline]
fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

#[inline]
fn normal(rng: &mut Rng, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

fn mask(full: &IpdDataset, masked: impl Fn(usize) -> bool) -> IpdDataset {
    let mut observed = full.clone();
    for r in observed.records.iter_mut() {
        if masked(r.study) {
            r.x = None;
        }
    }
    observed
}

pub fn simulate_dengue(cfg: &DengueScenarioConfig, seed: u64) -> SimulatedData {
    struct Study {
        prev_logit: f64,
        gamma: f64,
        beta0: f64,
        beta2: f64,
        lambda: f64,
        phi: f64,
    }
    let mut prng = rng::stream(seed, &[rng::STUDY_PARAMS_DOMAIN]);
    let base = logit(cfg.covariate_prevalence);
    let studies: Vec<Study> = (0..cfg.studies)
        .map(|_| Study {
            prev_logit: base + normal(&mut prng, cfg.covariate_logit_sd),
            gamma: normal(&mut prng, cfg.gamma0j_sd),
            beta0: normal(&mut prng, cfg.beta0j_sd),
            beta2: normal(&mut prng, cfg.beta2j_sd),
            lambda: normal(&mut prng, cfg.lambda0j_var.sqrt()),
            phi: normal(&mut prng, cfg.phi0j_var.sqrt()),
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.studies * cfg.per_study);
    for (j, s) in studies.iter().enumerate() {
        let mut r = rng::stream(seed, &[rng::STUDY_DOMAIN, j as u64]);
        let prevalence = inv_logit(s.prev_logit);
        for _ in 0..cfg.per_study {
            let z = bernoulli(&mut r, prevalence) as u8 as f64;
            let x = bernoulli(&mut r, inv_logit(cfg.gamma00 + s.gamma + cfg.gamma1 * z));
            let xf = x as u8 as f64;
            let y = bernoulli(
                &mut r,
                inv_logit(cfg.beta00 + s.beta0 + cfg.beta1 * z + (cfg.beta2 + s.beta2) * xf),
            );
            let eta_star = if x {
                cfg.lambda00 + s.lambda + cfg.lambda1 * z
            } else {
                cfg.phi00 + s.phi + cfg.phi1 * z
            };
            let x_star = bernoulli(&mut r, inv_logit(eta_star));
            records.push(ParticipantRecord::new(j, y, Some(x), Some(x_star), vec![z]));
        }
    }
    let mut full = IpdDataset::new(records, cfg.studies, 1);
    full.covariate_names = vec!["joint_pain".into()];
    let observed = mask(&full, |j| j < cfg.masked_studies);
    SimulatedData { full, observed }
}

/// Data-generating values of the simulation study. Covariate coefficients
/// of the exposure and measurement models are given as magnitudes: covariate
/// `k` (1-based) gets `+magnitude` for odd `k` and `-magnitude` for even `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenarioConfig {
    pub per_study: usize,
    pub studies: usize,
    pub gold_studies: usize,
    pub covariates: usize,
    pub beta00: f64,
    pub tau_beta0: f64,
    pub beta_x: f64,
    pub tau_beta_x: f64,
    pub beta_z: f64,
    pub gamma00: f64,
    pub tau_gamma0: f64,
    pub gamma_z: f64,
    pub lambda00: f64,
    pub tau_lambda0: f64,
    pub lambda_z: f64,
    pub phi00: f64,
    pub tau_phi0: f64,
    pub phi_z: f64,
    /// Between-study SD of each covariate mean.
    pub covariate_mean_sd: f64,
    /// Within-study covariance between distinct covariates (variances are 1).
    pub covariate_covariance: f64,
}

pub const SIM_SCENARIOS: std::ops::RangeInclusive<u8> = 1..=11;

impl Default for SimScenarioConfig {
    fn default() -> Self {
        Self {
            per_study: 500,
            studies: 10,
            gold_studies: 5,
            covariates: 1,
            beta00: -0.5,
            tau_beta0: 0.25,
            beta_x: 1.0,
            tau_beta_x: 0.15,
            beta_z: 0.0,
            gamma00: -0.25,
            tau_gamma0: 0.25,
            gamma_z: 1.0,
            lambda00: 3.0,
            tau_lambda0: 1.0,
            lambda_z: 1.0,
            phi00: -3.0,
            tau_phi0: 1.0,
            phi_z: 1.0,
            covariate_mean_sd: 0.5,
            covariate_covariance: 0.25,
        }
    }
}

impl SimScenarioConfig {
    /// Scenario 1 is the default; scenarios 2–11 change one value each.
    pub fn scenario(s: u8) -> Result<Self> {
        let d = Self::default();
        Ok(match s {
            1 => d,
            2 => Self { gold_studies: 3, ..d },
            3 => Self { gold_studies: 7, ..d },
            4 => Self { gold_studies: 9, ..d },
            5 => Self { per_study: 100, ..d },
            6 => Self { per_study: 300, ..d },
            7 => Self { per_study: 700, ..d },
            8 => Self { covariates: 2, ..d },
            9 => Self { covariates: 3, ..d },
            10 => Self { covariates: 4, ..d },
            11 => Self { beta_z: 1.0, ..d },
            _ => return Err(Error::Config(format!("simulation scenario must be 1..=11, got {s}"))),
        })
    }

    fn signed(magnitude: f64, k: usize) -> f64 {
        if k % 2 == 0 {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Coefficient of covariate `k` (0-based) for a magnitude field.
    pub fn coefficient(magnitude: f64, k: usize) -> f64 {
        Self::signed(magnitude, k)
    }

    pub fn truth(&self) -> Truth {
        Truth { beta_x: self.beta_x, tau_beta_x: self.tau_beta_x }
    }

    /// Cholesky factor (row-major lower triangle) of the within-study
    /// covariate covariance.
    fn covariate_cholesky(&self) -> Vec<f64> {
        let k = self.covariates;
        let mut a = vec![0.0; k * k];
        for r in 0..k {
            for c in 0..k {
                a[r * k + c] = if r == c { 1.0 } else { self.covariate_covariance };
            }
        }
        let mut l = vec![0.0; k * k];
        for r in 0..k {
            for c in 0..=r {
                let mut s = a[r * k + c];
                for p in 0..c {
                    s -= l[r * k + p] * l[c * k + p];
                }
                l[r * k + c] = if r == c { s.sqrt() } else { s / l[c * k + c] };
            }
        }
        l
    }
}

/// Generating values of the targets of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta_x: f64,
    pub tau_beta_x: f64,
}

pub fn simulate_study(cfg: &SimScenarioConfig, seed: u64) -> (SimulatedData, Truth) {
    let k = cfg.covariates;
    struct Study {
        means: Vec<f64>,
        gamma: f64,
        beta0: f64,
        beta2: f64,
        lambda: f64,
        phi: f64,
    }
    let mut prng = rng::stream(seed, &[rng::STUDY_PARAMS_DOMAIN]);
    let studies: Vec<Study> = (0..cfg.studies)
        .map(|_| Study {
            means: (0..k).map(|_| normal(&mut prng, cfg.covariate_mean_sd)).collect(),
            gamma: normal(&mut prng, cfg.tau_gamma0),
            beta0: normal(&mut prng, cfg.tau_beta0),
            beta2: normal(&mut prng, cfg.tau_beta_x),
            lambda: normal(&mut prng, cfg.tau_lambda0),
            phi: normal(&mut prng, cfg.tau_phi0),
        })
        .collect();
    let chol = cfg.covariate_cholesky();
    let coef = |m: f64| -> Vec<f64> { (0..k).map(|c| SimScenarioConfig::coefficient(m, c)).collect() };
    let (gz, lz, pz) = (coef(cfg.gamma_z), coef(cfg.lambda_z), coef(cfg.phi_z));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut records = Vec::with_capacity(cfg.studies * cfg.per_study);
    let mut e = vec![0.0; k];
    for (j, s) in studies.iter().enumerate() {
        let mut r = rng::stream(seed, &[rng::STUDY_DOMAIN, j as u64]);
        for _ in 0..cfg.per_study {
            for v in e.iter_mut() {
                *v = r.sample::<f64, _>(StandardNormal);
            }
            let z: Vec<f64> = (0..k)
                .map(|row| s.means[row] + (0..=row).map(|c| chol[row * k + c] * e[c]).sum::<f64>())
                .collect();
            let x = bernoulli(&mut r, inv_logit(cfg.gamma00 + s.gamma + dot(&gz, &z)));
            let xf = x as u8 as f64;
            let eta_y = cfg.beta00 + s.beta0 + cfg.beta_z * z.iter().sum::<f64>() + (cfg.beta_x + s.beta2) * xf;
            let y = bernoulli(&mut r, inv_logit(eta_y));
            let eta_star = if x {
                cfg.lambda00 + s.lambda + dot(&lz, &z)
            } else {
                cfg.phi00 + s.phi + dot(&pz, &z)
            };
            let x_star = bernoulli(&mut r, inv_logit(eta_star));
            records.push(ParticipantRecord::new(j, y, Some(x), Some(x_star), z));
        }
    }
    let full = IpdDataset::new(records, cfg.studies, k);
    let observed = mask(&full, |j| j >= cfg.gold_studies);
    (SimulatedData { full, observed }, cfg.truth())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// `P(x* = 1 | x = 1)`; `None` when no record has `x = 1`.
    pub sensitivity: Option<f64>,
    /// `P(x* = 0 | x = 0)`; `None` when no record has `x = 0`.
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensSpec {
    pub pooled: Rates,
    pub per_study: Vec<Rates>,
}

/// Empirical sensitivity and specificity of `x_star` against `x` over
/// records where both are observed.
pub fn empirical_sens_spec(d: &IpdDataset) -> SensSpec {
    // [study][x][x_star]
    let mut counts = vec![[[0usize; 2]; 2]; d.study_count()];
    for r in &d.records {
        if let (Some(x), Some(xs)) = (r.x, r.x_star) {
            counts[r.study][x as usize][xs as usize] += 1;
        }
    }
    let rates = |c: &[[usize; 2]; 2]| Rates {
        sensitivity: {
            let n = c[1][0] + c[1][1];
            (n > 0).then(|| c[1][1] as f64 / n as f64)
        },
        specificity: {
            let n = c[0][0] + c[0][1];
            (n > 0).then(|| c[0][0] as f64 / n as f64)
        },
    };
    let mut total = [[0usize; 2]; 2];
    for c in &counts {
        for a in 0..2 {
            for b in 0..2 {
                total[a][b] += c[a][b];
            }
        }
    }
    SensSpec { pooled: rates(&total), per_study: counts.iter().map(rates).collect() }
}
