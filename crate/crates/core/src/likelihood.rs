//! Log-density contributions of the three submodels and the joint
//! log-posterior.
//!
//! Linear predictors are clamped to `[-LINEAR_PREDICTOR_BOUND,
//! LINEAR_PREDICTOR_BOUND]` before the Bernoulli log-density is evaluated.

use crate::data::{IpdDataset, ParticipantRecord};
use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, ParamState};
use crate::model::normal_ln_pdf;

pub const LINEAR_PREDICTOR_BOUND: f64 = 35.0;

#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn inv_logit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln Bernoulli(obs; inv_logit(eta))`
#[inline]
pub fn bernoulli_logit_ln(obs: bool, eta: f64) -> f64 {
    let eta = eta.clamp(-LINEAR_PREDICTOR_BOUND, LINEAR_PREDICTOR_BOUND);
    if obs {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

#[inline]
pub(crate) fn measurement_predictor(
    state: &ParamState,
    families: &[Family],
    study: usize,
    z: &[f64],
    y: bool,
    x: bool,
) -> f64 {
    let mut eta = 0.0;
    for &f in families {
        let w = f.branch(x, y);
        if w != 0.0 {
            eta += w * state.block(f).linear(study, z, y);
        }
    }
    eta
}

#[inline]
pub(crate) fn exposure_predictor(state: &ParamState, study: usize, z: &[f64]) -> f64 {
    state.block(Family::Gamma).linear(study, z, false)
}

#[inline]
pub(crate) fn outcome_predictor(state: &ParamState, study: usize, z: &[f64], x: bool) -> f64 {
    let mut eta = state.block(Family::Beta0).linear(study, z, false);
    if x {
        let b2 = state.block(Family::Beta2);
        eta += b2.intercept + b2.study[study];
    }
    eta
}

/// `ln P(x* | x, z, y)`; zero when the surrogate is missing or the
/// measurement submodel is disabled. A missing outcome is read as `y = 0`
/// (validation rules such records out).
pub fn loglik_measurement(state: &ParamState, spec: &ModelSpec, rec: &ParticipantRecord, x: bool) -> f64 {
    match rec.x_star {
        Some(xs) if spec.measurement.is_some() => {
            let y = rec.y.unwrap_or(false);
            let eta = measurement_predictor(state, spec.measurement_families(), rec.study, &rec.z, y, x);
            bernoulli_logit_ln(xs, eta)
        }
        _ => 0.0,
    }
}

/// `ln P(x | z)`; zero when the exposure submodel is disabled.
pub fn loglik_exposure(state: &ParamState, spec: &ModelSpec, rec: &ParticipantRecord, x: bool) -> f64 {
    if spec.exposure.is_none() {
        return 0.0;
    }
    bernoulli_logit_ln(x, exposure_predictor(state, rec.study, &rec.z))
}

/// `ln P(y | x, z)`; zero when the outcome is missing.
pub fn loglik_outcome(state: &ParamState, _spec: &ModelSpec, rec: &ParticipantRecord, x: bool) -> f64 {
    match rec.y {
        Some(y) => bernoulli_logit_ln(y, outcome_predictor(state, rec.study, &rec.z, x)),
        None => 0.0,
    }
}

/// Log-density of the random effects of one family given their SD.
///
/// With `tau == 0` the effects have a point mass at zero: they contribute
/// nothing when all are exactly zero and `-inf` otherwise.
pub(crate) fn random_effects_ln(effects: &[f64], tau: f64) -> f64 {
    if tau > 0.0 {
        effects.iter().map(|&b| normal_ln_pdf(b, tau)).sum()
    } else if tau == 0.0 && effects.iter().all(|&b| b == 0.0) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

pub fn log_prior(state: &ParamState, spec: &ModelSpec) -> f64 {
    let mut total = 0.0;
    for family in Family::ALL {
        let a = spec.activity(family);
        if !a.any() {
            continue;
        }
        let b = state.block(family);
        let sd = spec.priors.coef_sd(family);
        if a.intercept {
            total += normal_ln_pdf(b.intercept, sd);
        }
        if a.covariates {
            total += b.covariates.iter().map(|&c| normal_ln_pdf(c, sd)).sum::<f64>();
        }
        if a.outcome {
            total += normal_ln_pdf(b.outcome, sd);
        }
        if a.study {
            if b.tau < 0.0 {
                return f64::NEG_INFINITY;
            }
            total += spec.priors.heterogeneity(family).log_density(b.tau);
            total += random_effects_ln(&b.study, b.tau);
        }
    }
    total
}

/// Sum of the three log-likelihood terms of one record at its current
/// exposure value.
pub fn loglik_record(state: &ParamState, spec: &ModelSpec, rec: &ParticipantRecord, x: bool) -> f64 {
    loglik_measurement(state, spec, rec, x) + loglik_exposure(state, spec, rec, x) + loglik_outcome(state, spec, rec, x)
}

/// Joint log-posterior (up to the normalising constant) at `state`, using
/// `state.x` as the exposure of every record.
pub fn log_posterior(state: &ParamState, spec: &ModelSpec, d: &IpdDataset) -> Result<f64> {
    let mut total = log_prior(state, spec);
    for (rec, &x) in d.records.iter().zip(&state.x) {
        total += loglik_record(state, spec, rec, x);
    }
    if total.is_nan() || total == f64::INFINITY {
        return Err(Error::NonFinitePosterior { value: total });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, ExposureVariant, MeasurementVariant, OutcomeVariant, Slot, ParamId};

    const LN_HALF: f64 = -std::f64::consts::LN_2;

    fn rec(y: bool, x: Option<bool>, xs: Option<bool>, z: Vec<f64>) -> ParticipantRecord {
        ParticipantRecord::new(0, y, x, xs, z)
    }

    fn state(j: usize, k: usize) -> ParamState {
        ParamState::with_exposures(j, k, vec![])
    }

    #[test]
    fn bernoulli_is_stable() {
        assert!((bernoulli_logit_ln(true, 0.0) - LN_HALF).abs() < 1e-15);
        assert!(bernoulli_logit_ln(true, 1e6).is_finite());
        assert!(bernoulli_logit_ln(false, 1e6).is_finite());
        let p: f64 = inv_logit(1.3);
        assert!((bernoulli_logit_ln(true, 1.3) - p.ln()).abs() < 1e-14);
        assert!((bernoulli_logit_ln(false, 1.3) - (1.0 - p).ln()).abs() < 1e-14);
        assert!((inv_logit(logit(0.37)) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn measurement_sensitivity() {
        let spec = preset("eq1-2-3").unwrap();
        let mut s = state(1, 0);
        s.block_mut(Family::Lambda).intercept = logit(0.9);
        let r = rec(true, None, Some(true), vec![]);
        assert!((loglik_measurement(&s, &spec, &r, true) - 0.9f64.ln()).abs() < 1e-14);
        // phi = 0 => P(x* = 1 | x = 0) = 0.5
        assert!((loglik_measurement(&s, &spec, &r, false) - LN_HALF).abs() < 1e-15);
        let missing = rec(true, Some(true), None, vec![]);
        assert_eq!(loglik_measurement(&s, &spec, &missing, true), 0.0);
    }

    #[test]
    fn exposure_paper_values() {
        let spec = preset("eq1-2-3").unwrap();
        let mut s = state(1, 1);
        let r = rec(true, Some(true), None, vec![1.0]);
        assert!((loglik_exposure(&s, &spec, &r, true) - LN_HALF).abs() < 1e-15);
        assert!((loglik_exposure(&s, &spec, &r, false) - LN_HALF).abs() < 1e-15);
        s.block_mut(Family::Gamma).intercept = -1.70;
        s.block_mut(Family::Gamma).covariates[0] = 4.26;
        let expected = inv_logit(2.56).ln();
        assert!((loglik_exposure(&s, &spec, &r, true) - expected).abs() < 1e-12);
    }

    #[test]
    fn outcome_paper_values() {
        let spec = preset("eq1-2-3").unwrap();
        let mut s = state(1, 1);
        s.block_mut(Family::Beta0).intercept = -0.26;
        s.block_mut(Family::Beta0).covariates[0] = -0.06;
        s.block_mut(Family::Beta2).intercept = 0.78;
        let r = rec(true, Some(true), None, vec![0.0]);
        assert!((loglik_outcome(&s, &spec, &r, true) - inv_logit(0.52).ln()).abs() < 1e-12);
        let s0 = state(1, 1);
        let r0 = rec(false, Some(false), None, vec![0.3]);
        assert!((loglik_outcome(&s0, &spec, &r0, false) - LN_HALF).abs() < 1e-15);
    }

    #[test]
    fn stratified_branches_use_signed_products() {
        let spec = preset("eq14-5-11").unwrap();
        let mut s = state(1, 0);
        s.block_mut(Family::Eta).intercept = 1.0;
        s.block_mut(Family::Theta).intercept = 2.0;
        s.block_mut(Family::Psi).intercept = 3.0;
        s.block_mut(Family::Omega).intercept = 4.0;
        let cases = [(true, true, 1.0), (false, true, -2.0), (true, false, -3.0), (false, false, 4.0)];
        for (x, y, eta) in cases {
            let r = rec(y, None, Some(true), vec![]);
            let got = loglik_measurement(&s, &spec, &r, x);
            assert!((got - bernoulli_logit_ln(true, eta)).abs() < 1e-15, "x={x} y={y}");
        }
    }

    #[test]
    fn log_prior_support_and_zero_state() {
        let spec = preset("eq8-5-11").unwrap();
        let mut s = state(3, 1);
        let taus = crate::model::active_parameters(&spec, 3, 1).into_iter().filter(ParamId::is_tau).count();
        let fixed = crate::model::active_parameters(&spec, 3, 1).into_iter().filter(ParamId::is_fixed_effect).count();
        let expected = taus as f64 * (2.0 / (2.0 * std::f64::consts::PI).sqrt()).ln()
            + fixed as f64 * normal_ln_pdf(0.0, 2.0);
        assert!((log_prior(&s, &spec) - expected).abs() < 1e-12);
        s.set(ParamId::new(Family::Beta2, Slot::Tau), -0.1);
        assert_eq!(log_prior(&s, &spec), f64::NEG_INFINITY);
    }

    #[test]
    fn wider_prior_favours_large_effects() {
        let spec = preset("eq1-2-3").unwrap();
        let mut wide = spec.clone();
        wide.priors.coef_sd = 4.0;
        let mut s = state(1, 1);
        s.block_mut(Family::Beta2).intercept = 8.0;
        assert!(log_prior(&s, &wide) > log_prior(&s, &spec));
    }

    #[test]
    fn single_record_posterior() {
        let spec = preset("eq1-2-3").unwrap();
        let d = IpdDataset::new(vec![rec(true, Some(true), Some(true), vec![0.0])], 1, 1);
        let mut s = ParamState::zeros(&d);
        s.x = vec![true];
        let lp = log_posterior(&s, &spec, &d).unwrap();
        assert!((lp - (3.0 * LN_HALF + log_prior(&s, &spec))).abs() < 1e-12);
    }

    #[test]
    fn nested_variants_agree_exactly() {
        let mut s = state(2, 2);
        for (i, f) in Family::ALL.iter().enumerate() {
            let b = s.block_mut(*f);
            b.intercept = 0.3 * i as f64 - 1.0;
            b.covariates = vec![0.2, -0.4];
        }
        s.block_mut(Family::Gamma).study = vec![0.0, 0.0];
        let r = ParticipantRecord::new(1, true, None, Some(false), vec![0.7, -1.1]);
        let diff = ModelSpec::new(Some(MeasurementVariant::Differential), Some(ExposureVariant::RandomIntercept), OutcomeVariant::RandomSlope);
        let cov = ModelSpec { measurement: Some(MeasurementVariant::Covariate), ..diff.clone() };
        let slope = ModelSpec { exposure: Some(ExposureVariant::Common), ..diff.clone() };
        for x in [false, true] {
            assert_eq!(loglik_measurement(&s, &diff, &r, x), loglik_measurement(&s, &cov, &r, x));
            assert_eq!(loglik_exposure(&s, &diff, &r, x), loglik_exposure(&s, &slope, &r, x));
            let ri = ModelSpec { outcome: OutcomeVariant::RandomIntercept, ..diff.clone() };
            assert_eq!(loglik_outcome(&s, &diff, &r, x), loglik_outcome(&s, &ri, &r, x));
        }
    }
}
