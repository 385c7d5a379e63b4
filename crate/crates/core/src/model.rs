//! Model variants, priors and the parameter state.
//!
//! A model is one measurement submodel (P(x* | x, z, y)), one exposure
//! submodel (P(x | z)) and one outcome submodel (P(y | x, z)), all on the
//! logit scale. Every coefficient belongs to a [`Family`]; a family holds an
//! intercept, covariate slopes, an outcome slope (measurement families only),
//! per-study random effects and the standard deviation of those effects.
//!
//! Parameter names follow `family[.study]`, e.g. `lambda00`, `lambda_z1`,
//! `lambda0j.3`, `tau_lambda`, `beta20`, `beta2j.0`, `tau_beta2`. Latent
//! exposures are named `x.<record index>`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::IpdDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementVariant {
    /// Sensitivity and specificity shared by all studies.
    Common,
    /// Study-specific random intercepts on both branches.
    RandomIntercept,
    /// Random intercepts plus participant covariates.
    Covariate,
    /// As `Covariate`, plus a dependence on the outcome.
    Differential,
    /// Four separate branches indexed by (x, y).
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureVariant {
    Common,
    RandomIntercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeVariant {
    Common,
    RandomIntercept,
    RandomSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logit,
}

/// Prior on a between-study standard deviation `tau`.
///
/// Log-densities are always expressed with respect to `tau` itself, so the
/// variance-scale priors include the Jacobian `2 tau` of `tau -> tau^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeterogeneityPrior {
    /// `tau ~ half-N(0, scale^2)`.
    HalfNormal { scale: f64 },
    /// `tau^2 ~ half-N(0, scale^2)`.
    HalfNormalVariance { scale: f64 },
    /// `tau^2 ~ Inv-Gamma(shape, rate)`.
    InverseGamma { shape: f64, rate: f64 },
}

impl HeterogeneityPrior {
    pub fn log_density(&self, tau: f64) -> f64 {
        if !(tau >= 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            HeterogeneityPrior::HalfNormal { scale } => half_normal_ln_pdf(tau, scale),
            HeterogeneityPrior::HalfNormalVariance { scale } => {
                half_normal_ln_pdf(tau * tau, scale) + (2.0 * tau).ln()
            }
            HeterogeneityPrior::InverseGamma { shape, rate } => {
                let v = tau * tau;
                shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - rate / v
                    + (2.0 * tau).ln()
            }
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            HeterogeneityPrior::HalfNormal { scale }
            | HeterogeneityPrior::HalfNormalVariance { scale } => scale > 0.0 && scale.is_finite(),
            HeterogeneityPrior::InverseGamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
        }
    }
}

fn half_normal_ln_pdf(v: f64, scale: f64) -> f64 {
    std::f64::consts::LN_2 - normal_ln_norm(scale) - 0.5 * (v / scale).powi(2)
}

/// `ln(sd * sqrt(2 pi))`
fn normal_ln_norm(sd: f64) -> f64 {
    sd.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub(crate) fn normal_ln_pdf(v: f64, sd: f64) -> f64 {
    -normal_ln_norm(sd) - 0.5 * (v / sd).powi(2)
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyPrior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<HeterogeneityPrior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Standard deviation of the Normal(0, sd^2) prior on every fixed effect.
    pub coef_sd: f64,
    pub heterogeneity: HeterogeneityPrior,
    /// Per-family overrides keyed by family name (`lambda`, `beta2`, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, FamilyPrior>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coef_sd: 2.0,
            heterogeneity: HeterogeneityPrior::HalfNormal { scale: 1.0 },
            overrides: BTreeMap::new(),
        }
    }
}

impl PriorConfig {
    /// Inverse-gamma(0.01, 0.01) on every heterogeneity variance.
    pub fn with_inverse_gamma() -> Self {
        Self {
            heterogeneity: HeterogeneityPrior::InverseGamma { shape: 0.01, rate: 0.01 },
            ..Self::default()
        }
    }

    pub fn coef_sd(&self, family: Family) -> f64 {
        self.overrides.get(family.name()).and_then(|o| o.coef_sd).unwrap_or(self.coef_sd)
    }

    pub fn heterogeneity(&self, family: Family) -> HeterogeneityPrior {
        self.overrides
            .get(family.name())
            .and_then(|o| o.heterogeneity)
            .unwrap_or(self.heterogeneity)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coef_sd > 0.0 && self.coef_sd.is_finite()) {
            return Err(Error::Config(format!("priors.coef_sd must be positive, got {}", self.coef_sd)));
        }
        if !self.heterogeneity.is_valid() {
            return Err(Error::Config("priors.heterogeneity: scale/shape/rate must be positive".into()));
        }
        for (name, o) in &self.overrides {
            if Family::from_name(name).is_none() {
                return Err(Error::Config(format!("priors.overrides: unknown family {name:?}")));
            }
            if let Some(sd) = o.coef_sd {
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::Config(format!("priors.overrides.{name}.coef_sd must be positive")));
                }
            }
            if let Some(h) = o.heterogeneity {
                if !h.is_valid() {
                    return Err(Error::Config(format!(
                        "priors.overrides.{name}.heterogeneity: values must be positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submodel {
    Measurement,
    Exposure,
    Outcome,
}

/// A group of coefficients sharing a linear-predictor role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Measurement branch x = 1 (log-odds sensitivity).
    Lambda,
    /// Measurement branch x = 0 (log-odds of 1 - specificity).
    Phi,
    /// Stratified measurement, x = 1 and y = 1.
    Eta,
    /// Stratified measurement, x = 0 and y = 1.
    Theta,
    /// Stratified measurement, x = 1 and y = 0.
    Psi,
    /// Stratified measurement, x = 0 and y = 0.
    Omega,
    Gamma,
    /// Outcome intercept and covariates.
    Beta0,
    /// Exposure-outcome association.
    Beta2,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Lambda,
        Family::Phi,
        Family::Eta,
        Family::Theta,
        Family::Psi,
        Family::Omega,
        Family::Gamma,
        Family::Beta0,
        Family::Beta2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Lambda => "lambda",
            Family::Phi => "phi",
            Family::Eta => "eta",
            Family::Theta => "theta",
            Family::Psi => "psi",
            Family::Omega => "omega",
            Family::Gamma => "gamma",
            Family::Beta0 => "beta0",
            Family::Beta2 => "beta2",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn submodel(self) -> Submodel {
        match self {
            Family::Gamma => Submodel::Exposure,
            Family::Beta0 | Family::Beta2 => Submodel::Outcome,
            _ => Submodel::Measurement,
        }
    }

    /// Name stems: (intercept, covariate prefix, study prefix, tau).
    fn stems(self) -> (&'static str, &'static str, &'static str, &'static str) {
        match self {
            Family::Lambda => ("lambda00", "lambda_z", "lambda0j", "tau_lambda"),
            Family::Phi => ("phi00", "phi_z", "phi0j", "tau_phi"),
            Family::Eta => ("eta00", "eta_z", "eta0j", "tau_eta"),
            Family::Theta => ("theta00", "theta_z", "theta0j", "tau_theta"),
            Family::Psi => ("psi00", "psi_z", "psi0j", "tau_psi"),
            Family::Omega => ("omega00", "omega_z", "omega0j", "tau_omega"),
            Family::Gamma => ("gamma00", "gamma_z", "gamma0j", "tau_gamma"),
            Family::Beta0 => ("beta00", "beta_z", "beta0j", "tau_beta0"),
            Family::Beta2 => ("beta20", "beta2_z", "beta2j", "tau_beta2"),
        }
    }

    /// Multiplier of this family's linear term in the measurement or outcome
    /// predictor, for exposure `x` and outcome `y`. Stratified branches use
    /// the signed products `x y`, `(x-1) y`, `x (y-1)`, `(x-1)(y-1)`.
    #[inline]
    pub fn branch(self, x: bool, y: bool) -> f64 {
        let xf = x as u8 as f64;
        let yf = y as u8 as f64;
        match self {
            Family::Lambda => xf,
            Family::Phi => 1.0 - xf,
            Family::Eta => xf * yf,
            Family::Theta => (xf - 1.0) * yf,
            Family::Psi => xf * (yf - 1.0),
            Family::Omega => (xf - 1.0) * (yf - 1.0),
            Family::Gamma | Family::Beta0 => 1.0,
            Family::Beta2 => xf,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which parts of a family are free under a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Activity {
    pub intercept: bool,
    pub covariates: bool,
    pub outcome: bool,
    /// Random effects and their standard deviation.
    pub study: bool,
}

impl Activity {
    const OFF: Activity = Activity { intercept: false, covariates: false, outcome: false, study: false };

    pub fn any(&self) -> bool {
        self.intercept || self.covariates || self.outcome || self.study
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `None` disables the measurement submodel (x* is ignored).
    pub measurement: Option<MeasurementVariant>,
    /// `None` disables the exposure submodel; x must then be fully observed.
    pub exposure: Option<ExposureVariant>,
    pub outcome: OutcomeVariant,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub priors: PriorConfig,
}

/// Preset names in table order.
pub const PRESETS: [&str; 8] = [
    "eq1-2-3", "eq1-5-3", "eq7-5-3", "eq8-5-3", "eq8-5-10", "eq8-5-11", "eq13-5-11", "eq14-5-11",
];

/// Looks up one of the eight named misclassification models.
pub fn preset(name: &str) -> Result<ModelSpec> {
    use ExposureVariant as E;
    use MeasurementVariant as M;
    use OutcomeVariant as O;
    let (m, e, o) = match name {
        "eq1-2-3" => (M::Common, E::Common, O::Common),
        "eq1-5-3" => (M::Common, E::RandomIntercept, O::Common),
        "eq7-5-3" => (M::RandomIntercept, E::RandomIntercept, O::Common),
        "eq8-5-3" => (M::Covariate, E::RandomIntercept, O::Common),
        "eq8-5-10" => (M::Covariate, E::RandomIntercept, O::RandomIntercept),
        "eq8-5-11" => (M::Covariate, E::RandomIntercept, O::RandomSlope),
        "eq13-5-11" => (M::Differential, E::RandomIntercept, O::RandomSlope),
        "eq14-5-11" => (M::Stratified, E::RandomIntercept, O::RandomSlope),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(ModelSpec::new(Some(m), Some(e), o))
}

impl ModelSpec {
    pub fn new(
        measurement: Option<MeasurementVariant>,
        exposure: Option<ExposureVariant>,
        outcome: OutcomeVariant,
    ) -> Self {
        Self { measurement, exposure, outcome, link: Link::Logit, priors: PriorConfig::default() }
    }

    /// Outcome-only model used when x is fully observed.
    pub fn outcome_only(outcome: OutcomeVariant) -> Self {
        Self::new(None, None, outcome)
    }

    pub fn with_priors(mut self, priors: PriorConfig) -> Self {
        self.priors = priors;
        self
    }

    pub fn is_stratified(&self) -> bool {
        self.measurement == Some(MeasurementVariant::Stratified)
    }

    pub fn activity(&self, family: Family) -> Activity {
        use MeasurementVariant as M;
        match family {
            Family::Lambda | Family::Phi => match self.measurement {
                None | Some(M::Stratified) => Activity::OFF,
                Some(M::Common) => Activity { intercept: true, ..Activity::OFF },
                Some(M::RandomIntercept) => Activity { intercept: true, study: true, ..Activity::OFF },
                Some(M::Covariate) => Activity { intercept: true, covariates: true, study: true, outcome: false },
                Some(M::Differential) => Activity { intercept: true, covariates: true, study: true, outcome: true },
            },
            Family::Eta | Family::Theta | Family::Psi | Family::Omega => match self.measurement {
                Some(M::Stratified) => Activity { intercept: true, covariates: true, study: true, outcome: false },
                _ => Activity::OFF,
            },
            Family::Gamma => match self.exposure {
                None => Activity::OFF,
                Some(ExposureVariant::Common) => Activity { intercept: true, covariates: true, ..Activity::OFF },
                Some(ExposureVariant::RandomIntercept) => {
                    Activity { intercept: true, covariates: true, study: true, outcome: false }
                }
            },
            Family::Beta0 => Activity {
                intercept: true,
                covariates: true,
                study: self.outcome != OutcomeVariant::Common,
                outcome: false,
            },
            Family::Beta2 => Activity {
                intercept: true,
                study: self.outcome == OutcomeVariant::RandomSlope,
                ..Activity::OFF
            },
        }
    }

    /// Families that contribute to the measurement predictor.
    pub fn measurement_families(&self) -> &'static [Family] {
        match self.measurement {
            None => &[],
            Some(MeasurementVariant::Stratified) => &[Family::Eta, Family::Theta, Family::Psi, Family::Omega],
            Some(_) => &[Family::Lambda, Family::Phi],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()
    }
}

/// Position of a scalar inside a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Intercept,
    Covariate(usize),
    Outcome,
    Study(usize),
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub family: Family,
    pub slot: Slot,
}

impl ParamId {
    pub const fn new(family: Family, slot: Slot) -> Self {
        Self { family, slot }
    }

    pub fn name(&self) -> String {
        let (int, z, study, tau) = self.family.stems();
        match self.slot {
            Slot::Intercept => int.to_string(),
            Slot::Covariate(k) => format!("{z}{}", k + 1),
            Slot::Outcome => format!("{}_y", self.family.name()),
            Slot::Study(j) => format!("{study}.{j}"),
            Slot::Tau => tau.to_string(),
        }
    }

    pub fn parse(name: &str) -> Option<ParamId> {
        for family in Family::ALL {
            let (int, z, study, tau) = family.stems();
            let slot = if name == int {
                Some(Slot::Intercept)
            } else if name == tau {
                Some(Slot::Tau)
            } else if name == format!("{}_y", family.name()) {
                Some(Slot::Outcome)
            } else if let Some(k) = name.strip_prefix(z).and_then(|s| s.parse::<usize>().ok()) {
                (k >= 1).then(|| Slot::Covariate(k - 1))
            } else if let Some(j) = name.strip_prefix(study).and_then(|s| s.strip_prefix('.')) {
                j.parse::<usize>().ok().map(Slot::Study)
            } else {
                None
            };
            if let Some(slot) = slot {
                return Some(ParamId { family, slot });
            }
        }
        None
    }

    pub fn is_random_effect(&self) -> bool {
        matches!(self.slot, Slot::Study(_))
    }

    pub fn is_tau(&self) -> bool {
        self.slot == Slot::Tau
    }

    pub fn is_fixed_effect(&self) -> bool {
        !self.is_random_effect() && !self.is_tau()
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// All active scalar parameters of a model in canonical order: family order
/// lambda, phi, eta, theta, psi, omega, gamma, beta0, beta2; within a family
/// intercept, covariates, outcome slope, study effects, tau.
pub fn active_parameters(spec: &ModelSpec, study_count: usize, covariate_count: usize) -> Vec<ParamId> {
    let mut out = Vec::new();
    for family in Family::ALL {
        let a = spec.activity(family);
        if a.intercept {
            out.push(ParamId::new(family, Slot::Intercept));
        }
        if a.covariates {
            out.extend((0..covariate_count).map(|k| ParamId::new(family, Slot::Covariate(k))));
        }
        if a.outcome {
            out.push(ParamId::new(family, Slot::Outcome));
        }
        if a.study {
            out.extend((0..study_count).map(|j| ParamId::new(family, Slot::Study(j))));
            out.push(ParamId::new(family, Slot::Tau));
        }
    }
    out
}

/// Names of every free quantity: active parameters followed by one
/// `x.<i>` slot per record whose gold-standard exposure is missing.
pub fn free_parameters(spec: &ModelSpec, d: &IpdDataset) -> Vec<String> {
    let mut names: Vec<String> = active_parameters(spec, d.study_count(), d.covariate_count())
        .iter()
        .map(ParamId::name)
        .collect();
    if spec.exposure.is_some() {
        names.extend(
            d.records.iter().enumerate().filter(|(_, r)| r.x.is_none()).map(|(i, _)| format!("x.{i}")),
        );
    }
    names
}

/// Coefficients of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub intercept: f64,
    pub covariates: Vec<f64>,
    pub outcome: f64,
    pub study: Vec<f64>,
    pub tau: f64,
}

impl Block {
    fn zeros(study_count: usize, covariate_count: usize) -> Self {
        Self {
            intercept: 0.0,
            covariates: vec![0.0; covariate_count],
            outcome: 0.0,
            study: vec![0.0; study_count],
            tau: 0.0,
        }
    }

    /// `intercept + study effect + covariates . z + outcome * y`
    #[inline]
    pub fn linear(&self, study: usize, z: &[f64], y: bool) -> f64 {
        let mut eta = self.intercept + self.study[study];
        for (c, v) in self.covariates.iter().zip(z) {
            eta += c * v;
        }
        if y {
            eta += self.outcome;
        }
        eta
    }
}

/// One point in parameter space plus the current exposure value of every
/// record. For records with an observed gold standard `x` mirrors the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub blocks: Vec<Block>,
    pub x: Vec<bool>,
}

impl ParamState {
    /// All coefficients zero; exposures taken from `x`, else `x_star`.
    pub fn zeros(d: &IpdDataset) -> Self {
        let x = d.records.iter().map(|r| r.x.or(r.x_star).unwrap_or(false)).collect();
        Self::with_exposures(d.study_count(), d.covariate_count(), x)
    }

    pub fn with_exposures(study_count: usize, covariate_count: usize, x: Vec<bool>) -> Self {
        Self {
            blocks: Family::ALL.iter().map(|_| Block::zeros(study_count, covariate_count)).collect(),
            x,
        }
    }

    #[inline]
    pub fn block(&self, family: Family) -> &Block {
        &self.blocks[family.index()]
    }

    #[inline]
    pub fn block_mut(&mut self, family: Family) -> &mut Block {
        &mut self.blocks[family.index()]
    }

    pub fn get(&self, id: ParamId) -> f64 {
        let b = self.block(id.family);
        match id.slot {
            Slot::Intercept => b.intercept,
            Slot::Covariate(k) => b.covariates[k],
            Slot::Outcome => b.outcome,
            Slot::Study(j) => b.study[j],
            Slot::Tau => b.tau,
        }
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        let b = self.block_mut(id.family);
        match id.slot {
            Slot::Intercept => b.intercept = value,
            Slot::Covariate(k) => b.covariates[k] = value,
            Slot::Outcome => b.outcome = value,
            Slot::Study(j) => b.study[j] = value,
            Slot::Tau => b.tau = value,
        }
    }

    pub fn get_by_name(&self, name: &str) -> Result<f64> {
        if let Some(i) = name.strip_prefix("x.").and_then(|s| s.parse::<usize>().ok()) {
            return self
                .x
                .get(i)
                .map(|&v| v as u8 as f64)
                .ok_or_else(|| Error::UnknownParameter(name.to_string()));
        }
        let id = ParamId::parse(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let b = self.block(id.family);
        let in_range = match id.slot {
            Slot::Covariate(k) => k < b.covariates.len(),
            Slot::Study(j) => j < b.study.len(),
            _ => true,
        };
        if in_range {
            Ok(self.get(id))
        } else {
            Err(Error::UnknownParameter(name.to_string()))
        }
    }

    /// Every scalar that is not free under `spec` (should stay exactly zero).
    pub fn inactive_values(&self, spec: &ModelSpec) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for family in Family::ALL {
            let a = spec.activity(family);
            let b = self.block(family);
            let id = |slot| ParamId::new(family, slot).name();
            if !a.intercept {
                out.push((id(Slot::Intercept), b.intercept));
            }
            if !a.covariates {
                out.extend(b.covariates.iter().enumerate().map(|(k, &v)| (id(Slot::Covariate(k)), v)));
            }
            if !a.outcome {
                out.push((id(Slot::Outcome), b.outcome));
            }
            if !a.study {
                out.extend(b.study.iter().enumerate().map(|(j, &v)| (id(Slot::Study(j)), v)));
                out.push((id(Slot::Tau), b.tau));
            }
        }
        out
    }
}
