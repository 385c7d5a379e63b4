//! Metropolis-within-Gibbs sampler.
//!
//! One iteration of a chain performs, in order:
//!
//! 1. an exact Gibbs draw of every latent exposure from its Bernoulli full
//!    conditional;
//! 2. a scalar random-walk Metropolis update of every fixed effect,
//!    measurement families first, then exposure, then outcome;
//! 3. a scalar random-walk update of every study-level random effect;
//! 4. a random-walk update of every `log tau`;
//! 5. for each family with random effects, a *shift* move
//!    (`intercept + c`, every study effect `- c`, which leaves the likelihood
//!    unchanged) and a *scale* move (`tau` and all study effects multiplied by
//!    a common factor).
//!
//! Moves 5 target the same posterior and only speed up mixing of
//! hierarchical parameters. Step sizes adapt with a Robbins–Monro rule during
//! the adaptation phase and are frozen afterwards.
//!
//! Each record caches its three linear predictors and log-likelihood terms;
//! coefficient updates only revisit the records whose predictor depends on the
//! coefficient. Caches are rebuilt from scratch during every latent sweep.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_with, DataRequirements, IpdDataset, ParticipantRecord};
use crate::draws::{DrawsMatrix, DrawsMeta};
use crate::error::{Error, Result};
use crate::likelihood::{
    bernoulli_logit_ln, exposure_predictor, loglik_exposure, loglik_measurement, loglik_outcome,
    measurement_predictor, outcome_predictor, random_effects_ln,
};
use crate::model::{active_parameters, normal_ln_pdf, Family, ModelSpec, ParamId, ParamState, Slot};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub adapt_n: usize,
    pub warmup_n: usize,
    /// Post-warm-up iterations per chain, before thinning.
    pub keep_n: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Parameter names to record. Entries ending in `*` match by prefix.
    /// `None` records every active fixed effect and every tau.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<Vec<String>>,
    /// Wall-clock limit; not part of the serialized configuration.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl SamplerConfig {
    /// 2 chains, 1000 adaptation, 1000 warm-up, 25000 kept, thinned by 5.
    pub fn analysis(seed: u64) -> Self {
        Self {
            chains: 2,
            adapt_n: 1000,
            warmup_n: 1000,
            keep_n: 25_000,
            thin: 5,
            seed,
            target_accept: 0.44,
            monitor: None,
            deadline: None,
        }
    }

    /// 2 chains, 1000 adaptation, 5000 warm-up, 10000 kept, thinned by 2.
    pub fn simulation(seed: u64) -> Self {
        Self { warmup_n: 5000, keep_n: 10_000, thin: 2, ..Self::analysis(seed) }
    }

    /// 2 chains, 1000 adaptation, 2000 warm-up, 4000 kept, thinned by 2.
    pub fn desk(seed: u64) -> Self {
        Self { warmup_n: 2000, keep_n: 4000, thin: 2, ..Self::analysis(seed) }
    }

    pub fn with_monitor(mut self, names: &[&str]) -> Self {
        self.monitor = Some(names.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn draws_per_chain(&self) -> usize {
        self.keep_n / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.chains == 0 || self.keep_n == 0 || self.thin == 0 {
            return bad("sampler: chains, keep_n and thin must be positive");
        }
        if self.keep_n % self.thin != 0 {
            return bad("sampler: thin must divide keep_n");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("sampler: target_accept must lie in (0, 1)");
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::analysis(1)
    }
}

/// Metropolis rule: accept when `u < exp(min(0, log_ratio))`.
#[inline]
pub fn metropolis_accept(log_ratio: f64, u: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || u < log_ratio.exp()
}

/// Robbins–Monro step-size table on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub log_sd: Vec<f64>,
    pub target_accept: f64,
    pub gain: f64,
}

impl StepSizes {
    const MIN_LOG_SD: f64 = -13.8; // ~1e-6
    const MAX_LOG_SD: f64 = 4.6; // ~1e2

    pub fn new(initial: Vec<f64>, target_accept: f64) -> Self {
        Self { log_sd: initial.iter().map(|s| s.ln()).collect(), target_accept, gain: 1.0 }
    }

    #[inline]
    pub fn sd(&self, k: usize) -> f64 {
        self.log_sd[k].exp()
    }

    /// `ln sd += gain * (accepted - target) / iteration^0.6`
    pub fn adapt(&mut self, k: usize, acceptance: f64, iteration: usize) {
        let t = iteration.max(1) as f64;
        let v = self.log_sd[k] + self.gain * (acceptance - self.target_accept) / t.powf(0.6);
        self.log_sd[k] = v.clamp(Self::MIN_LOG_SD, Self::MAX_LOG_SD);
    }

    /// Applies one adaptation round with a per-kernel acceptance history.
    pub fn adapt_all(&mut self, acceptance: &[f64], iteration: usize) {
        for (k, &a) in acceptance.iter().enumerate() {
            self.adapt(k, a, iteration);
        }
    }
}

/// `P(x = 1 | everything else)` for a record with missing gold standard,
/// computed from the public likelihood functions.
pub fn latent_x_full_conditional(state: &ParamState, spec: &ModelSpec, rec: &ParticipantRecord) -> Result<f64> {
    let lp1 = loglik_measurement(state, spec, rec, true)
        + loglik_exposure(state, spec, rec, true)
        + loglik_outcome(state, spec, rec, true);
    let lp0 = loglik_measurement(state, spec, rec, false)
        + loglik_exposure(state, spec, rec, false)
        + loglik_outcome(state, spec, rec, false);
    two_point_probability(lp1, lp0).ok_or(Error::DegenerateFullConditional { record: 0 })
}

#[inline]
fn two_point_probability(lp1: f64, lp0: f64) -> Option<f64> {
    if lp1 == f64::NEG_INFINITY && lp0 == f64::NEG_INFINITY || lp1.is_nan() || lp0.is_nan() {
        return None;
    }
    Some(1.0 / (1.0 + (lp0 - lp1).exp()))
}

/// Validated, column-oriented copy of a dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ModelSpec,
    n: usize,
    j: usize,
    k: usize,
    study: Vec<usize>,
    y: Vec<bool>,
    x_obs: Vec<Option<bool>>,
    x_star: Vec<Option<bool>>,
    z: Vec<f64>,
    members: Vec<Vec<usize>>,
    latent: Vec<usize>,
    params: Vec<ParamId>,
    families_meas: &'static [Family],
}

impl Prepared {
    pub fn new(spec: &ModelSpec, d: &IpdDataset) -> Result<Self> {
        spec.validate()?;
        let req = DataRequirements {
            calibration_overlap: spec.measurement.is_some(),
            complete_exposure: spec.exposure.is_none(),
        };
        validate_with(d, req).into_result()?;
        Ok(Self::build(spec, d))
    }

    /// Empty dataset with the given shape; sampling it draws from the prior.
    pub fn prior_only(spec: &ModelSpec, study_count: usize, covariate_count: usize) -> Result<Self> {
        spec.validate()?;
        let d = IpdDataset::new(Vec::new(), study_count, covariate_count);
        Ok(Self::build(spec, &d))
    }

    fn build(spec: &ModelSpec, d: &IpdDataset) -> Self {
        let k = d.covariate_count();
        let j = d.study_count();
        let mut z = Vec::with_capacity(d.len() * k);
        for r in &d.records {
            z.extend_from_slice(&r.z);
        }
        let latent = if spec.exposure.is_some() {
            d.records.iter().enumerate().filter(|(_, r)| r.x.is_none()).map(|(i, _)| i).collect()
        } else {
            Vec::new()
        };
        Self {
            spec: spec.clone(),
            n: d.len(),
            j,
            k,
            study: d.records.iter().map(|r| r.study).collect(),
            y: d.records.iter().map(|r| r.y.unwrap_or(false)).collect(),
            x_obs: d.records.iter().map(|r| r.x).collect(),
            x_star: d.records.iter().map(|r| r.x_star).collect(),
            z,
            members: d.study_members(),
            latent,
            params: active_parameters(spec, j, k),
            families_meas: spec.measurement_families(),
        }
    }

    #[inline]
    fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    pub fn parameters(&self) -> &[ParamId] {
        &self.params
    }

    pub fn latent_records(&self) -> &[usize] {
        &self.latent
    }

    pub fn record_count(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Coef(ParamId),
    Tau(Family),
    Shift(Family),
    Scale(Family),
}

fn kernel_schedule(params: &[ParamId]) -> Vec<Kernel> {
    let mut out: Vec<Kernel> = params.iter().filter(|p| p.is_fixed_effect()).map(|&p| Kernel::Coef(p)).collect();
    out.extend(params.iter().filter(|p| p.is_random_effect()).map(|&p| Kernel::Coef(p)));
    let taus: Vec<Family> = params.iter().filter(|p| p.is_tau()).map(|p| p.family).collect();
    out.extend(taus.iter().map(|&f| Kernel::Tau(f)));
    for &f in &taus {
        out.push(Kernel::Shift(f));
        out.push(Kernel::Scale(f));
    }
    out
}

fn initial_step(kernel: Kernel) -> f64 {
    match kernel {
        Kernel::Coef(_) => 0.1,
        Kernel::Tau(_) | Kernel::Scale(_) => 0.3,
        Kernel::Shift(_) => 0.1,
    }
}

/// Starting point: fixed effects ~ N(0, 0.1^2) with the sensitivity branch
/// anchored at +1 and the false-positive branch at -1, random effects at 0,
/// every tau at 0.1, and latent exposures set to the surrogate.
pub fn init_state(prep: &Prepared, rng: &mut Rng) -> ParamState {
    let x = (0..prep.n).map(|i| prep.x_obs[i].or(prep.x_star[i]).unwrap_or(false)).collect();
    let mut state = ParamState::with_exposures(prep.j, prep.k, x);
    for &p in &prep.params {
        match p.slot {
            Slot::Tau => state.set(p, 0.1),
            Slot::Study(_) => {}
            _ => state.set(p, 0.1 * rng.sample::<f64, _>(StandardNormal)),
        }
    }
    // Predictor signs per branch: lambda, eta (+); phi, omega (+) on the
    // false-positive side; theta and psi enter with a negative multiplier.
    let anchors = [
        (Family::Lambda, 1.0),
        (Family::Phi, -1.0),
        (Family::Eta, 1.0),
        (Family::Theta, 1.0),
        (Family::Psi, -1.0),
        (Family::Omega, -1.0),
    ];
    for (family, value) in anchors {
        if prep.spec.activity(family).intercept {
            state.block_mut(family).intercept = value;
        }
    }
    state
}

/// One Markov chain: parameter state plus per-record caches.
#[derive(Debug, Clone)]
pub struct Chain {
    prep: Arc<Prepared>,
    state: ParamState,
    eta_m: Vec<f64>,
    ll_m: Vec<f64>,
    eta_e: Vec<f64>,
    ll_e: Vec<f64>,
    eta_o: Vec<f64>,
    ll_o: Vec<f64>,
    scratch: Vec<(usize, f64, f64)>,
}

impl Chain {
    pub fn new(prep: Arc<Prepared>, state: ParamState) -> Self {
        let n = prep.n;
        let mut chain = Self {
            prep,
            state,
            eta_m: vec![0.0; n],
            ll_m: vec![0.0; n],
            eta_e: vec![0.0; n],
            ll_e: vec![0.0; n],
            eta_o: vec![0.0; n],
            ll_o: vec![0.0; n],
            scratch: Vec::new(),
        };
        chain.refresh();
        chain
    }

    pub fn from_dataset(spec: &ModelSpec, d: &IpdDataset, state: ParamState) -> Result<Self> {
        Ok(Self::new(Arc::new(Prepared::new(spec, d)?), state))
    }

    pub fn state(&self) -> &ParamState {
        &self.state
    }

    pub fn into_state(self) -> ParamState {
        self.state
    }

    pub fn prepared(&self) -> &Prepared {
        &self.prep
    }

    /// Recomputes every cached predictor and log-likelihood term.
    pub fn refresh(&mut self) {
        for i in 0..self.prep.n {
            let x = self.state.x[i];
            self.set_record_cache(i, x);
        }
    }

    #[inline]
    fn set_record_cache(&mut self, i: usize, x: bool) {
        let p = &*self.prep;
        let (s, z, y) = (p.study[i], p.z(i), p.y[i]);
        if let (Some(xs), true) = (p.x_star[i], !p.families_meas.is_empty()) {
            let eta = measurement_predictor(&self.state, p.families_meas, s, z, y, x);
            self.eta_m[i] = eta;
            self.ll_m[i] = bernoulli_logit_ln(xs, eta);
        }
        if p.spec.exposure.is_some() {
            let eta = exposure_predictor(&self.state, s, z);
            self.eta_e[i] = eta;
            self.ll_e[i] = bernoulli_logit_ln(x, eta);
        }
        let eta = outcome_predictor(&self.state, s, z, x);
        self.eta_o[i] = eta;
        self.ll_o[i] = bernoulli_logit_ln(y, eta);
    }

    /// Sum of the cached log-likelihood terms plus the log-prior.
    pub fn log_posterior(&self) -> f64 {
        let lik: f64 = (0..self.prep.n).map(|i| self.ll_m[i] + self.ll_e[i] + self.ll_o[i]).sum();
        crate::likelihood::log_prior(&self.state, &self.prep.spec) + lik
    }

    /// Full conditional `P(x_i = 1 | rest)` for record `i`.
    pub fn latent_probability(&self, i: usize) -> Result<f64> {
        let p = &*self.prep;
        let (s, z, y) = (p.study[i], p.z(i), p.y[i]);
        let mut lp = [0.0f64; 2];
        let eta_e = exposure_predictor(&self.state, s, z);
        for (slot, x) in [(0usize, false), (1usize, true)] {
            let mut v = bernoulli_logit_ln(x, eta_e);
            if let (Some(xs), true) = (p.x_star[i], !p.families_meas.is_empty()) {
                v += bernoulli_logit_ln(xs, measurement_predictor(&self.state, p.families_meas, s, z, y, x));
            }
            v += bernoulli_logit_ln(y, outcome_predictor(&self.state, s, z, x));
            lp[slot] = v;
        }
        two_point_probability(lp[1], lp[0]).ok_or(Error::DegenerateFullConditional { record: i })
    }

    /// Redraws every latent exposure from its full conditional and rebuilds
    /// all record caches.
    pub fn update_latent_x(&mut self, rng: &mut Rng) -> Result<()> {
        let prep = Arc::clone(&self.prep);
        for &i in &prep.latent {
            let prob = self.latent_probability(i)?;
            let u: f64 = rng.random();
            self.state.x[i] = u < prob;
        }
        self.refresh();
        Ok(())
    }

    #[inline]
    fn multiplier(&self, id: ParamId, i: usize) -> f64 {
        let p = &*self.prep;
        let base = id.family.branch(self.state.x[i], p.y[i]);
        if base == 0.0 {
            return 0.0;
        }
        match id.slot {
            Slot::Intercept | Slot::Study(_) => base,
            Slot::Covariate(k) => base * p.z[i * p.k + k],
            Slot::Outcome => {
                if p.y[i] {
                    base
                } else {
                    0.0
                }
            }
            Slot::Tau => 0.0,
        }
    }

    fn coef_prior_ln(&self, id: ParamId, value: f64) -> f64 {
        match id.slot {
            Slot::Study(_) => {
                let tau = self.state.block(id.family).tau;
                random_effects_ln(&[value], tau)
            }
            _ => normal_ln_pdf(value, self.prep.spec.priors.coef_sd(id.family)),
        }
    }

    /// Change in log-likelihood when every coefficient of `family` on
    /// `records` moves its linear predictor by `delta(i)`. Fills `scratch`
    /// with the proposed cache entries.
    fn likelihood_delta<F>(&mut self, family: Family, records: Records, delta: F) -> f64
    where
        F: Fn(&Self, usize) -> f64,
    {
        let prep = Arc::clone(&self.prep);
        let sub = family.submodel();
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        let mut total = 0.0;
        let mut visit = |i: usize, this: &Self| {
            let d = delta(this, i);
            if d == 0.0 {
                return;
            }
            let (eta, ll, obs) = match sub {
                crate::model::Submodel::Measurement => match prep.x_star[i] {
                    Some(xs) => (this.eta_m[i], this.ll_m[i], xs),
                    None => return,
                },
                crate::model::Submodel::Exposure => (this.eta_e[i], this.ll_e[i], this.state.x[i]),
                crate::model::Submodel::Outcome => (this.eta_o[i], this.ll_o[i], prep.y[i]),
            };
            let eta_new = eta + d;
            let ll_new = bernoulli_logit_ln(obs, eta_new);
            total += ll_new - ll;
            scratch.push((i, eta_new, ll_new));
        };
        match records {
            Records::All => (0..prep.n).for_each(|i| visit(i, self)),
            Records::Study(j) => prep.members[j].iter().for_each(|&i| visit(i, self)),
        }
        self.scratch = scratch;
        total
    }

    fn commit_scratch(&mut self, family: Family) {
        let (eta, ll) = match family.submodel() {
            crate::model::Submodel::Measurement => (&mut self.eta_m, &mut self.ll_m),
            crate::model::Submodel::Exposure => (&mut self.eta_e, &mut self.ll_e),
            crate::model::Submodel::Outcome => (&mut self.eta_o, &mut self.ll_o),
        };
        for &(i, e, l) in &self.scratch {
            eta[i] = e;
            ll[i] = l;
        }
    }

    /// Log posterior ratio of moving coefficient `id` to `value`, computed
    /// from the affected records only.
    pub fn local_delta(&mut self, id: ParamId, value: f64) -> f64 {
        let current = self.state.get(id);
        let step = value - current;
        let records = match id.slot {
            Slot::Study(j) => Records::Study(j),
            _ => Records::All,
        };
        let dlik = self.likelihood_delta(id.family, records, |c, i| step * c.multiplier(id, i));
        dlik + self.coef_prior_ln(id, value) - self.coef_prior_ln(id, current)
    }

    /// Random-walk Metropolis update of one fixed effect or random effect.
    pub fn update_fixed_effect(&mut self, id: ParamId, step_sd: f64, rng: &mut Rng) -> bool {
        let eps: f64 = rng.sample(StandardNormal);
        let proposal = self.state.get(id) + step_sd * eps;
        let delta = self.local_delta(id, proposal);
        let u: f64 = rng.random();
        if metropolis_accept(delta, u) {
            self.state.set(id, proposal);
            self.commit_scratch(id.family);
            true
        } else {
            false
        }
    }

    fn tau_terms(&self, family: Family, tau: f64, effects: &[f64]) -> f64 {
        self.prep.spec.priors.heterogeneity(family).log_density(tau) + random_effects_ln(effects, tau)
    }

    /// Random-walk Metropolis update of `log tau` for one family.
    pub fn update_tau(&mut self, family: Family, step_sd: f64, rng: &mut Rng) -> bool {
        let eps: f64 = rng.sample(StandardNormal);
        let b = self.state.block(family);
        let tau = b.tau;
        let proposal = tau * (step_sd * eps).exp();
        let delta = self.tau_terms(family, proposal, &b.study) - self.tau_terms(family, tau, &b.study)
            + (proposal.ln() - tau.ln());
        let u: f64 = rng.random();
        if delta.is_finite() && proposal.is_finite() && proposal > 0.0 && metropolis_accept(delta, u) {
            self.state.block_mut(family).tau = proposal;
            true
        } else {
            false
        }
    }

    /// Moves the intercept by `c` and every study effect by `-c`.
    pub fn update_shift(&mut self, family: Family, step_sd: f64, rng: &mut Rng) -> bool {
        let c = step_sd * rng.sample::<f64, _>(StandardNormal);
        let b = self.state.block(family);
        let sd = self.prep.spec.priors.coef_sd(family);
        let moved: Vec<f64> = b.study.iter().map(|v| v - c).collect();
        let delta = normal_ln_pdf(b.intercept + c, sd) - normal_ln_pdf(b.intercept, sd)
            + random_effects_ln(&moved, b.tau)
            - random_effects_ln(&b.study, b.tau);
        let u: f64 = rng.random();
        if metropolis_accept(delta, u) {
            let b = self.state.block_mut(family);
            // The predictor depends on intercept + study effect only; caches
            // stay valid up to rounding and are rebuilt at the next sweep.
            b.intercept += c;
            b.study = moved;
            true
        } else {
            false
        }
    }

    /// Multiplies `tau` and every study effect by `exp(eps)`.
    pub fn update_scale(&mut self, family: Family, step_sd: f64, rng: &mut Rng) -> bool {
        let eps = step_sd * rng.sample::<f64, _>(StandardNormal);
        let factor = eps.exp();
        let b = self.state.block(family);
        let tau = b.tau;
        let proposal = tau * factor;
        let old_effects = b.study.clone();
        let dlik = self.likelihood_delta(family, Records::All, |c, i| {
            let s = c.prep.study[i];
            let be = old_effects[s];
            if be == 0.0 {
                return 0.0;
            }
            let base = family.branch(c.state.x[i], c.prep.y[i]);
            base * be * (factor - 1.0)
        });
        // The Normal densities of the rescaled effects cancel the Jacobian.
        let het = self.prep.spec.priors.heterogeneity(family);
        let delta = dlik + het.log_density(proposal) - het.log_density(tau) + eps;
        let u: f64 = rng.random();
        if delta.is_finite() && proposal > 0.0 && metropolis_accept(delta, u) {
            let b = self.state.block_mut(family);
            b.tau = proposal;
            for v in b.study.iter_mut() {
                *v *= factor;
            }
            self.commit_scratch(family);
            true
        } else {
            false
        }
    }

    fn run_kernel(&mut self, kernel: Kernel, step: f64, rng: &mut Rng) -> bool {
        match kernel {
            Kernel::Coef(id) => self.update_fixed_effect(id, step, rng),
            Kernel::Tau(f) => self.update_tau(f, step, rng),
            Kernel::Shift(f) => self.update_shift(f, step, rng),
            Kernel::Scale(f) => self.update_scale(f, step, rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Records {
    All,
    Study(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Monitored {
    Param(ParamId),
    Latent(usize),
}

fn resolve_monitor(prep: &Prepared, filter: Option<&[String]>) -> Result<(Vec<String>, Vec<Monitored>)> {
    let mut all: Vec<(String, Monitored)> =
        prep.params.iter().map(|&p| (p.name(), Monitored::Param(p))).collect();
    all.extend(prep.latent.iter().map(|&i| (format!("x.{i}"), Monitored::Latent(i))));
    let chosen: Vec<(String, Monitored)> = match filter {
        None => all.into_iter().filter(|(_, m)| matches!(m, Monitored::Param(p) if !p.is_random_effect())).collect(),
        Some(names) => {
            let mut out: Vec<(String, Monitored)> = Vec::new();
            for pattern in names {
                let matched: Vec<&(String, Monitored)> = match pattern.strip_suffix('*') {
                    Some(prefix) => all.iter().filter(|(n, _)| n.starts_with(prefix)).collect(),
                    None => all.iter().filter(|(n, _)| n == pattern).collect(),
                };
                if matched.is_empty() {
                    return Err(Error::UnknownParameter(pattern.clone()));
                }
                for m in matched {
                    if !out.iter().any(|(n, _)| n == &m.0) {
                        out.push(m.clone());
                    }
                }
            }
            out
        }
    };
    Ok(chosen.into_iter().unzip())
}

/// Everything a run produces, including the final chain states.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub draws: DrawsMatrix,
    pub final_states: Vec<ParamState>,
    /// Step sizes when adaptation ended and when the chain finished.
    pub adapted_steps: Vec<StepSizes>,
    pub final_steps: Vec<StepSizes>,
    /// Post-adaptation acceptance rate of each kernel, averaged over chains.
    pub acceptance: Vec<(String, f64)>,
}

struct ChainResult {
    values: Vec<f64>,
    state: ParamState,
    adapted: StepSizes,
    finished: StepSizes,
    accepted: Vec<u64>,
}

fn run_chain(prep: Arc<Prepared>, cfg: &SamplerConfig, chain_index: usize, monitored: &[Monitored]) -> Result<ChainResult> {
    let mut rng = rng::chain_stream(cfg.seed, chain_index);
    let mut state = init_state(&prep, &mut rng);
    let mut attempts = 1;
    loop {
        let lp = Chain::new(Arc::clone(&prep), state.clone()).log_posterior();
        if lp.is_finite() {
            break;
        }
        if attempts >= 100 {
            return Err(Error::InitializationFailure { attempts });
        }
        state = init_state(&prep, &mut rng);
        attempts += 1;
    }
    let mut chain = Chain::new(Arc::clone(&prep), state);

    let kernels = kernel_schedule(&prep.params);
    let mut steps = StepSizes::new(kernels.iter().map(|&k| initial_step(k)).collect(), cfg.target_accept);
    let mut adapted = steps.clone();
    let mut acc_now = vec![0.0; kernels.len()];
    let mut accepted = vec![0u64; kernels.len()];

    let total = cfg.adapt_n + cfg.warmup_n + cfg.keep_n;
    let burn = cfg.adapt_n + cfg.warmup_n;
    let mut values = Vec::with_capacity(cfg.draws_per_chain() * monitored.len());
    for t in 1..=total {
        if t % 64 == 0 {
            if let Some(deadline) = cfg.deadline {
                if Instant::now() > deadline {
                    return Err(Error::Timeout);
                }
            }
        }
        chain.update_latent_x(&mut rng)?;
        for (k, &kernel) in kernels.iter().enumerate() {
            let ok = chain.run_kernel(kernel, steps.sd(k), &mut rng);
            acc_now[k] = ok as u8 as f64;
            if t > cfg.adapt_n {
                accepted[k] += ok as u64;
            }
        }
        if t <= cfg.adapt_n {
            steps.adapt_all(&acc_now, t);
            if t == cfg.adapt_n {
                adapted = steps.clone();
            }
        }
        if t > burn && (t - burn) % cfg.thin == 0 {
            let s = chain.state();
            values.extend(monitored.iter().map(|m| match *m {
                Monitored::Param(p) => s.get(p),
                Monitored::Latent(i) => s.x[i] as u8 as f64,
            }));
        }
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinitePosterior { value: *v });
    }
    Ok(ChainResult { values, state: chain.into_state(), adapted, finished: steps, accepted })
}

fn run_prepared(prep: Prepared, cfg: &SamplerConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let prep = Arc::new(prep);
    let (names, monitored) = resolve_monitor(&prep, cfg.monitor.as_deref())?;
    let results: Vec<Result<ChainResult>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(Arc::clone(&prep), cfg, c, &monitored))
        .collect();
    let results: Vec<ChainResult> = results.into_iter().collect::<Result<_>>()?;

    let kernels = kernel_schedule(&prep.params);
    let post = (cfg.warmup_n + cfg.keep_n).max(1) as f64 * cfg.chains as f64;
    let acceptance = kernels
        .iter()
        .enumerate()
        .map(|(k, kernel)| {
            let label = match kernel {
                Kernel::Coef(p) => p.name(),
                Kernel::Tau(f) => format!("tau_{f}"),
                Kernel::Shift(f) => format!("shift_{f}"),
                Kernel::Scale(f) => format!("scale_{f}"),
            };
            (label, results.iter().map(|r| r.accepted[k]).sum::<u64>() as f64 / post)
        })
        .collect();

    let draws_per_chain = cfg.draws_per_chain();
    let mut values = Vec::with_capacity(cfg.chains * draws_per_chain * names.len());
    for r in &results {
        values.extend_from_slice(&r.values);
    }
    let draws = DrawsMatrix {
        chain_count: cfg.chains,
        draws_per_chain,
        monitored: names,
        values,
        iterations: (1..=draws_per_chain).map(|d| d * cfg.thin).collect(),
        meta: DrawsMeta {
            seed: cfg.seed,
            adaptation_n: cfg.adapt_n,
            warmup_n: cfg.warmup_n,
            thin_factor: cfg.thin,
        },
    };
    Ok(FitOutput {
        draws,
        adapted_steps: results.iter().map(|r| r.adapted.clone()).collect(),
        final_steps: results.iter().map(|r| r.finished.clone()).collect(),
        final_states: results.into_iter().map(|r| r.state).collect(),
        acceptance,
    })
}

/// Runs the sampler and returns draws plus run diagnostics.
pub fn fit_detailed(spec: &ModelSpec, d: &IpdDataset, cfg: &SamplerConfig) -> Result<FitOutput> {
    run_prepared(Prepared::new(spec, d)?, cfg)
}

/// Runs `cfg.chains` independent chains and returns the thinned post-warm-up
/// draws of the monitored parameters. Deterministic given its arguments.
pub fn fit(spec: &ModelSpec, d: &IpdDataset, cfg: &SamplerConfig) -> Result<DrawsMatrix> {
    fit_detailed(spec, d, cfg).map(|o| o.draws)
}

/// Samples the prior of `spec` for a model shape with no records.
pub fn sample_prior(spec: &ModelSpec, study_count: usize, covariate_count: usize, cfg: &SamplerConfig) -> Result<FitOutput> {
    run_prepared(Prepared::prior_only(spec, study_count, covariate_count)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{log_posterior, logit};
    use crate::model::preset;
    use rand::SeedableRng;

    fn toy(n_per: usize, j: usize, k: usize, seed: u64) -> IpdDataset {
        let mut r = Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for s in 0..j {
            for i in 0..n_per {
                let z: Vec<f64> = (0..k).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let x = r.random::<bool>();
                let xs = if r.random::<f64>() < 0.85 { x } else { !x };
                let y = r.random::<f64>() < if x { 0.6 } else { 0.4 };
                let gold = s % 2 == 0 || i == 0;
                recs.push(ParticipantRecord::new(s, y, gold.then_some(x), Some(xs), z));
            }
        }
        IpdDataset::new(recs, j, k)
    }

    fn random_state(prep: &Prepared, seed: u64) -> ParamState {
        let mut r = Rng::seed_from_u64(seed);
        let mut s = init_state(prep, &mut r);
        for &p in prep.parameters() {
            let v: f64 = r.sample(StandardNormal);
            match p.slot {
                Slot::Tau => s.set(p, 0.2 + v.abs()),
                _ => s.set(p, 0.5 * v),
            }
        }
        s
    }

    #[test]
    fn metropolis_rule() {
        assert!(metropolis_accept(2f64.ln(), 0.4));
        assert!(metropolis_accept(0.0, 0.999_999));
        assert!(!metropolis_accept(-(2f64.ln()), 0.6));
        assert!(metropolis_accept(-(2f64.ln()), 0.4));
        assert!(!metropolis_accept(f64::NAN, 0.0));
        assert!(!metropolis_accept(f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn step_adaptation_rules() {
        let mut s = StepSizes::new(vec![0.1], 0.44);
        let mut last = s.sd(0);
        for t in 1..50 {
            s.adapt(0, 1.0, t);
            assert!(s.sd(0) > last);
            last = s.sd(0);
        }
        for t in 1..50 {
            s.adapt(0, 0.0, t);
            assert!(s.sd(0) < last);
            last = s.sd(0);
        }
        let before = s.log_sd[0];
        s.adapt(0, 0.44, 7);
        assert_eq!(s.log_sd[0], before);
    }

    #[test]
    fn bayes_rule_full_conditionals() {
        let spec = preset("eq1-2-3").unwrap();
        let rec = ParticipantRecord::new(0, true, None, Some(true), vec![0.0]);
        let mut s = ParamState::with_exposures(1, 1, vec![true]);
        s.block_mut(Family::Lambda).intercept = logit(0.9);
        s.block_mut(Family::Phi).intercept = logit(0.1);
        let p = latent_x_full_conditional(&s, &spec, &rec).unwrap();
        assert!((p - 0.9).abs() < 1e-12, "{p}");

        s.block_mut(Family::Beta0).intercept = 0.0; // p(y=1|x=0) = 0.5
        s.block_mut(Family::Beta2).intercept = logit(0.8);
        let p = latent_x_full_conditional(&s, &spec, &rec).unwrap();
        let expected = 0.9 * 0.8 / (0.9 * 0.8 + 0.1 * 0.5);
        assert!((p - expected).abs() < 1e-12, "{p}");
        assert!((expected - 0.935).abs() < 1e-3);

        s.block_mut(Family::Lambda).intercept = 1e3;
        s.block_mut(Family::Phi).intercept = -1e3;
        let p = latent_x_full_conditional(&s, &spec, &rec).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_conditional_matches_public_function() {
        let d = toy(8, 3, 2, 1);
        for name in crate::model::PRESETS {
            let spec = preset(name).unwrap();
            let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
            let state = random_state(&prep, 9);
            let chain = Chain::new(Arc::clone(&prep), state.clone());
            for &i in prep.latent_records() {
                let a = chain.latent_probability(i).unwrap();
                let b = latent_x_full_conditional(&state, &spec, &d.records[i]).unwrap();
                assert!((a - b).abs() < 1e-12, "{name} record {i}");
            }
        }
    }

    #[test]
    fn cached_posterior_matches_full_evaluation() {
        let d = toy(10, 4, 2, 2);
        for name in crate::model::PRESETS {
            let spec = preset(name).unwrap();
            let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
            let state = random_state(&prep, 3);
            let chain = Chain::new(prep, state.clone());
            let full = log_posterior(&state, &spec, &d).unwrap();
            assert!((chain.log_posterior() - full).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn local_delta_matches_full_recomputation() {
        let d = toy(10, 4, 2, 4);
        for name in crate::model::PRESETS {
            let spec = preset(name).unwrap();
            let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
            let state = random_state(&prep, 5);
            let mut chain = Chain::new(Arc::clone(&prep), state.clone());
            let base = log_posterior(&state, &spec, &d).unwrap();
            for &id in prep.parameters().iter().filter(|p| !p.is_tau()) {
                let value = state.get(id) + 0.37;
                let local = chain.local_delta(id, value);
                let mut moved = state.clone();
                moved.set(id, value);
                let full = log_posterior(&moved, &spec, &d).unwrap() - base;
                assert!((local - full).abs() < 1e-10, "{name} {id}: {local} vs {full}");
            }
        }
    }

    #[test]
    fn accepted_updates_keep_caches_consistent() {
        let d = toy(12, 3, 1, 6);
        let spec = preset("eq13-5-11").unwrap();
        let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
        let mut r = Rng::seed_from_u64(11);
        let mut chain = Chain::new(Arc::clone(&prep), init_state(&prep, &mut r));
        for _ in 0..20 {
            chain.update_latent_x(&mut r).unwrap();
            for kernel in kernel_schedule(prep.parameters()) {
                chain.run_kernel(kernel, 0.3, &mut r);
            }
            let full = log_posterior(chain.state(), &spec, &d).unwrap();
            assert!((chain.log_posterior() - full).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_steps_always_accept_without_change() {
        let d = toy(6, 2, 1, 7);
        let spec = preset("eq8-5-11").unwrap();
        let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
        let mut r = Rng::seed_from_u64(1);
        let mut chain = Chain::new(Arc::clone(&prep), init_state(&prep, &mut r));
        let before = chain.state().clone();
        for &id in prep.parameters().iter().filter(|p| !p.is_tau()) {
            assert!(chain.update_fixed_effect(id, 0.0, &mut r));
        }
        for f in [Family::Lambda, Family::Gamma, Family::Beta2] {
            assert!(chain.update_tau(f, 0.0, &mut r));
        }
        assert_eq!(chain.state(), &before);
    }

    #[test]
    fn non_finite_tau_proposals_rejected() {
        let d = toy(6, 2, 1, 7);
        let spec = preset("eq8-5-11").unwrap();
        let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
        let mut r = Rng::seed_from_u64(1);
        let mut chain = Chain::new(Arc::clone(&prep), init_state(&prep, &mut r));
        let tau = chain.state().block(Family::Beta2).tau;
        for _ in 0..20 {
            assert!(!chain.update_tau(Family::Beta2, 1e6, &mut r));
        }
        assert_eq!(chain.state().block(Family::Beta2).tau, tau);
    }

    #[test]
    fn fully_observed_latent_sweep_is_noop() {
        let mut d = toy(6, 2, 1, 8);
        for r in d.records.iter_mut() {
            r.x = r.x.or(r.x_star);
        }
        let spec = preset("eq1-2-3").unwrap();
        let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
        let mut r = Rng::seed_from_u64(1);
        let mut chain = Chain::new(prep, init_state(&Prepared::new(&spec, &d).unwrap(), &mut r));
        let before = chain.state().clone();
        chain.update_latent_x(&mut r).unwrap();
        assert_eq!(chain.state(), &before);
    }

    #[test]
    fn perfect_instrument_forces_latents() {
        let d = toy(10, 2, 0, 9);
        let spec = preset("eq1-2-3").unwrap();
        let prep = Arc::new(Prepared::new(&spec, &d).unwrap());
        let mut state = ParamState::zeros(&d);
        for x in state.x.iter_mut() {
            *x = !*x;
        }
        state.block_mut(Family::Lambda).intercept = 1e3;
        state.block_mut(Family::Phi).intercept = -1e3;
        let mut chain = Chain::new(prep, state);
        let mut r = Rng::seed_from_u64(2);
        chain.update_latent_x(&mut r).unwrap();
        for (i, rec) in d.records.iter().enumerate() {
            if rec.x.is_none() {
                assert_eq!(chain.state().x[i], rec.x_star.unwrap());
            }
        }
    }

    #[test]
    fn monitor_resolution() {
        let d = toy(4, 2, 1, 1);
        let spec = preset("eq8-5-11").unwrap();
        let prep = Prepared::new(&spec, &d).unwrap();
        let (names, _) = resolve_monitor(&prep, None).unwrap();
        assert!(names.contains(&"beta20".to_string()) && names.contains(&"tau_beta2".to_string()));
        assert!(!names.iter().any(|n| n.contains("0j.") || n.contains("2j.") || n.starts_with("x.")));
        let filter = vec!["beta2j.*".to_string(), "beta20".to_string(), "x.*".to_string()];
        let (names, _) = resolve_monitor(&prep, Some(&filter)).unwrap();
        assert_eq!(&names[..3], ["beta2j.0", "beta2j.1", "beta20"]);
        assert!(names.iter().any(|n| n.starts_with("x.")));
        assert!(resolve_monitor(&prep, Some(&["nope".to_string()])).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::desk(1);
        assert!(c.validate().is_ok());
        c.thin = 3;
        assert!(c.validate().is_err());
        let c = SamplerConfig { chains: 0, ..SamplerConfig::desk(1) };
        assert!(c.validate().is_err());
        assert_eq!(SamplerConfig::analysis(1).draws_per_chain(), 5000);
        assert_eq!(SamplerConfig::simulation(1).draws_per_chain(), 5000);
    }
}
