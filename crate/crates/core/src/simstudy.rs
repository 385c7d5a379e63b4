//! Simulation-study harness: replications, method application and
//! bias / RMSE / coverage aggregation.
//!
//! Replication `r` of scenario `s` draws its data with seed
//! `derive_seed(base_seed, [REPLICATION_DOMAIN, s, r])`; method `m` is
//! sampled with `derive_seed(rep_seed, [m])`. Results are keyed by
//! `(scenario, rep)` so the worker count never changes the output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{admeta_random_effects, make_complete_case, make_naive, study_estimates};
use crate::data::IpdDataset;
use crate::diagnostics::ParamSummary;
use crate::error::{Error, Result};
use crate::model::{preset, ModelSpec, OutcomeVariant, PriorConfig};
use crate::rng::{derive_seed, REPLICATION_DOMAIN};
use crate::sampler::{fit, SamplerConfig};
use crate::simulate::{simulate_study, SimScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullData,
    CompleteCase,
    Naive,
    Misclassification,
    AdGold,
    AdNaive,
}

/// The five methods compared in every replication.
pub const STUDY_METHODS: [Method; 5] =
    [Method::CompleteCase, Method::Naive, Method::Misclassification, Method::AdGold, Method::AdNaive];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FullData => "full_data",
            Method::CompleteCase => "complete_case",
            Method::Naive => "naive",
            Method::Misclassification => "misclassification",
            Method::AdGold => "ad_gold",
            Method::AdNaive => "ad_naive",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Method::FullData, Method::CompleteCase, Method::Naive, Method::Misclassification, Method::AdGold, Method::AdNaive]
            .into_iter()
            .find(|m| m.name() == s)
    }

    fn index(self) -> u64 {
        self as u64
    }
}

/// Posterior median and equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    fn from_summary(s: &ParamSummary) -> Self {
        Self { median: s.median, ci_low: s.ci95_low, ci_high: s.ci95_high }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Estimates of the exposure effect and its heterogeneity from one method.
/// `tau` is `None` for models without a random exposure slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub beta_x: Estimate,
    pub tau: Option<Estimate>,
    /// Studies dropped from a two-stage analysis because their fit was unstable.
    #[serde(default)]
    pub unstable_studies: usize,
}

/// Everything needed to run the comparison methods on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Misclassification model.
    pub model: ModelSpec,
    /// Outcome model of the IPD comparators.
    pub comparator_outcome: OutcomeVariant,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
}

impl MethodConfig {
    pub fn new(model: ModelSpec, sampler: SamplerConfig) -> Self {
        Self { comparator_outcome: model.outcome, priors: model.priors.clone(), model, sampler }
    }
}

fn ipd_result(d: &IpdDataset, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<MethodResult> {
    let slope = spec.outcome == OutcomeVariant::RandomSlope;
    let names: &[&str] = if slope { &["beta20", "tau_beta2"] } else { &["beta20"] };
    let draws = fit(spec, d, &cfg.clone().with_monitor(names))?;
    let summary = |n: &str| ParamSummary::from_chains(n, &draws.chains_by_name(n).expect("monitored"));
    Ok(MethodResult {
        beta_x: Estimate::from_summary(&summary("beta20")),
        tau: slope.then(|| Estimate::from_summary(&summary("tau_beta2"))),
        unstable_studies: 0,
    })
}

fn two_stage_result(d: &IpdDataset, priors: &PriorConfig, cfg: &SamplerConfig) -> Result<MethodResult> {
    let (est, unstable) = study_estimates(d, true);
    let fit = admeta_random_effects(&est, priors, cfg, None)?;
    Ok(MethodResult {
        beta_x: Estimate::from_summary(&fit.mu),
        tau: Some(Estimate::from_summary(&fit.tau)),
        unstable_studies: unstable.len(),
    })
}

/// Applies one method. `full` is only needed for [`Method::FullData`];
/// `seed` replaces the sampler seed in `cfg`.
pub fn apply_method(
    method: Method,
    observed: &IpdDataset,
    full: Option<&IpdDataset>,
    cfg: &MethodConfig,
    seed: u64,
) -> Result<MethodResult> {
    let sampler = SamplerConfig { seed, ..cfg.sampler.clone() };
    let comparator = ModelSpec::outcome_only(cfg.comparator_outcome).with_priors(cfg.priors.clone());
    match method {
        Method::FullData => {
            let full = full.ok_or_else(|| Error::Config("full-data method needs the full dataset".into()))?;
            ipd_result(full, &comparator, &sampler)
        }
        Method::CompleteCase => ipd_result(&make_complete_case(observed)?, &comparator, &sampler),
        Method::Naive => ipd_result(&make_naive(observed)?, &comparator, &sampler),
        Method::Misclassification => ipd_result(observed, &cfg.model, &sampler),
        Method::AdGold => two_stage_result(&make_complete_case(observed)?, &cfg.priors, &sampler),
        Method::AdNaive => two_stage_result(&make_naive(observed)?, &cfg.priors, &sampler),
    }
}

/// Sampler budget and limits of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub preset: String,
    pub comparator_outcome: OutcomeVariant,
    pub priors: PriorConfig,
    /// Protocol template; its seed is replaced per method and replication.
    pub sampler: SamplerConfig,
    pub timeout_secs: u64,
}

impl HarnessConfig {
    /// 2 chains, 1000 adaptation, 2000 warm-up, 4000 kept, thin 2.
    pub fn desk() -> Self {
        Self {
            preset: "eq8-5-11".into(),
            comparator_outcome: OutcomeVariant::RandomSlope,
            priors: PriorConfig::default(),
            sampler: SamplerConfig::desk(0),
            timeout_secs: 600,
        }
    }

    /// 2 chains, 1000 adaptation, 5000 warm-up, 10000 kept, thin 2.
    pub fn paper_protocol() -> Self {
        Self { sampler: SamplerConfig::simulation(0), ..Self::desk() }
    }

    fn method_config(&self) -> Result<MethodConfig> {
        let model = preset(&self.preset)?.with_priors(self.priors.clone());
        Ok(MethodConfig {
            model,
            comparator_outcome: self.comparator_outcome,
            priors: self.priors.clone(),
            sampler: self.sampler.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub scenario: u8,
    pub rep: usize,
    pub seed: u64,
    /// One entry per method in [`STUDY_METHODS`] order, or the failure reason.
    pub outcome: std::result::Result<Vec<(Method, MethodResult)>, String>,
}

impl ReplicationResult {
    pub fn completed(&self) -> bool {
        self.outcome.is_ok()
    }
}

pub fn replication_seed(base_seed: u64, scenario: u8, rep: usize) -> u64 {
    derive_seed(base_seed, &[REPLICATION_DOMAIN, scenario as u64, rep as u64])
}

/// Simulates one dataset and applies every method; any method error fails
/// the replication.
pub fn run_replication(scenario: u8, rep: usize, rep_seed: u64, cfg: &HarnessConfig) -> ReplicationResult {
    let outcome = (|| -> Result<Vec<(Method, MethodResult)>> {
        let sc = SimScenarioConfig::scenario(scenario)?;
        let (data, _) = simulate_study(&sc, rep_seed);
        run_methods(&data.observed, cfg, rep_seed)
    })()
    .map_err(|e| match e {
        Error::Timeout => "timeout".to_string(),
        e => e.to_string(),
    });
    ReplicationResult { scenario, rep, seed: rep_seed, outcome }
}

/// Applies [`STUDY_METHODS`] to an observed dataset under the harness
/// configuration.
pub fn run_methods(observed: &IpdDataset, cfg: &HarnessConfig, rep_seed: u64) -> Result<Vec<(Method, MethodResult)>> {
    let mut mc = cfg.method_config()?;
    mc.sampler.deadline = Some(Instant::now() + Duration::from_secs(cfg.timeout_secs));
    STUDY_METHODS
        .iter()
        .map(|&m| {
            if mc.sampler.deadline.is_some_and(|d| Instant::now() > d) {
                return Err(Error::Timeout);
            }
            apply_method(m, observed, None, &mc, derive_seed(rep_seed, &[m.index()])).map(|r| (m, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    BetaX,
    TauBetaX,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::BetaX => "beta_x",
            Target::TauBetaX => "tau_beta_x",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: u8,
    pub method: Method,
    pub target: Target,
    /// `None` when no replication completed.
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage95: Option<f64>,
    pub n_completed: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn get(&self, scenario: u8, method: Method, target: Target) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.method == method && r.target == target)
    }
}

/// Bias, RMSE and coverage of posterior medians and intervals.
pub fn point_metrics(estimates: &[Estimate], truth: f64) -> Result<(f64, f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::NoCompletedReplications);
    }
    let n = estimates.len() as f64;
    let bias = estimates.iter().map(|e| e.median - truth).sum::<f64>() / n;
    let rmse = (estimates.iter().map(|e| (e.median - truth).powi(2)).sum::<f64>() / n).sqrt();
    let cover = estimates.iter().filter(|e| e.contains(truth)).count() as f64 / n;
    Ok((bias, rmse, cover))
}

/// Metrics for the replications of one scenario. Failed replications are
/// counted and excluded for every method.
pub fn aggregate(results: &[ReplicationResult], scenario: u8) -> Result<Vec<MetricsRow>> {
    let truth = SimScenarioConfig::scenario(scenario)?.truth();
    let mine: Vec<&ReplicationResult> = results.iter().filter(|r| r.scenario == scenario).collect();
    let done: Vec<&Vec<(Method, MethodResult)>> = mine.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let n_failed = mine.len() - done.len();
    let mut rows = Vec::new();
    for &m in &STUDY_METHODS {
        for (target, value) in [(Target::BetaX, truth.beta_x), (Target::TauBetaX, truth.tau_beta_x)] {
            let est: Vec<Estimate> = done
                .iter()
                .filter_map(|ms| ms.iter().find(|(mm, _)| *mm == m))
                .filter_map(|(_, r)| match target {
                    Target::BetaX => Some(r.beta_x),
                    Target::TauBetaX => r.tau,
                })
                .collect();
            let metrics = point_metrics(&est, value).ok();
            rows.push(MetricsRow {
                scenario,
                method: m,
                target,
                bias: metrics.map(|v| v.0),
                rmse: metrics.map(|v| v.1),
                coverage95: metrics.map(|v| v.2),
                n_completed: done.len(),
                n_failed,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStudyOutput {
    pub metrics: MetricsReport,
    /// Sorted by `(scenario, rep)`.
    pub raw: Vec<ReplicationResult>,
}

/// Aggregates every scenario present in a raw table.
pub fn aggregate_all(raw: &[ReplicationResult]) -> Result<MetricsReport> {
    let mut scenarios: Vec<u8> = raw.iter().map(|r| r.scenario).collect();
    scenarios.sort_unstable();
    scenarios.dedup();
    let mut rows = Vec::new();
    for s in scenarios {
        rows.extend(aggregate(raw, s)?);
    }
    Ok(MetricsReport { rows })
}

/// Runs `reps` replications of each scenario on a pool of `jobs` workers.
pub fn run_scenarios(
    scenarios: &[u8],
    reps: usize,
    base_seed: u64,
    jobs: usize,
    cfg: &HarnessConfig,
) -> Result<SimStudyOutput> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    for &s in scenarios {
        SimScenarioConfig::scenario(s)?;
    }
    cfg.method_config()?.sampler.validate()?;
    let items: Vec<(u8, usize)> = scenarios.iter().flat_map(|&s| (0..reps).map(move |r| (s, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut raw: Vec<ReplicationResult> = pool.install(|| {
        items
            .par_iter()
            .map(|&(s, r)| run_replication(s, r, replication_seed(base_seed, s, r), cfg))
            .collect()
    });
    raw.sort_by_key(|r| (r.scenario, r.rep));
    Ok(SimStudyOutput { metrics: aggregate_all(&raw)?, raw })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawRow {
    scenario: u8,
    rep: usize,
    seed: u64,
    status: String,
    method: String,
    beta_x_median: Option<f64>,
    beta_x_low: Option<f64>,
    beta_x_high: Option<f64>,
    tau_median: Option<f64>,
    tau_low: Option<f64>,
    tau_high: Option<f64>,
    unstable_studies: Option<usize>,
}

/// One row per `(scenario, rep, method)`; a failed replication is a single
/// row with status `failed: <reason>` and an empty method.
pub fn write_raw_table<W: Write>(raw: &[ReplicationResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in raw {
        match &r.outcome {
            Ok(methods) => {
                for (m, res) in methods {
                    w.serialize(RawRow {
                        scenario: r.scenario,
                        rep: r.rep,
                        seed: r.seed,
                        status: "ok".into(),
                        method: m.name().into(),
                        beta_x_median: Some(res.beta_x.median),
                        beta_x_low: Some(res.beta_x.ci_low),
                        beta_x_high: Some(res.beta_x.ci_high),
                        tau_median: res.tau.map(|t| t.median),
                        tau_low: res.tau.map(|t| t.ci_low),
                        tau_high: res.tau.map(|t| t.ci_high),
                        unstable_studies: Some(res.unstable_studies),
                    })?;
                }
            }
            Err(reason) => w.serialize(RawRow {
                scenario: r.scenario,
                rep: r.rep,
                seed: r.seed,
                status: format!("failed: {reason}"),
                method: String::new(),
                beta_x_median: None,
                beta_x_low: None,
                beta_x_high: None,
                tau_median: None,
                tau_low: None,
                tau_high: None,
                unstable_studies: None,
            })?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_table<R: Read>(reader: R) -> Result<Vec<ReplicationResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<(u8, usize), ReplicationResult> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<RawRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let entry = grouped.entry((row.scenario, row.rep)).or_insert_with(|| ReplicationResult {
            scenario: row.scenario,
            rep: row.rep,
            seed: row.seed,
            outcome: Ok(Vec::new()),
        });
        if let Some(reason) = row.status.strip_prefix("failed: ") {
            entry.outcome = Err(reason.to_string());
            continue;
        }
        let m = Method::from_name(&row.method)
            .ok_or_else(|| Error::Config(format!("line {line}: unknown method {:?}", row.method)))?;
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| Error::Config(format!("line {line}: missing {field}")))
        };
        let beta_x = Estimate {
            median: need(row.beta_x_median, "beta_x_median")?,
            ci_low: need(row.beta_x_low, "beta_x_low")?,
            ci_high: need(row.beta_x_high, "beta_x_high")?,
        };
        let tau = match (row.tau_median, row.tau_low, row.tau_high) {
            (Some(median), Some(ci_low), Some(ci_high)) => Some(Estimate { median, ci_low, ci_high }),
            _ => None,
        };
        if let Ok(v) = entry.outcome.as_mut() {
            v.push((m, MethodResult { beta_x, tau, unstable_studies: row.unstable_studies.unwrap_or(0) }));
        }
    }
    Ok(grouped.into_values().collect())
}

pub fn write_raw_csv(raw: &[ReplicationResult], path: impl AsRef<Path>) -> Result<()> {
    write_raw_table(raw, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<Vec<ReplicationResult>> {
    read_raw_table(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Metrics table as CSV, one row per `(scenario, method, target)`.
pub fn write_metrics_table<W: Write>(m: &MetricsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "method", "target", "bias", "rmse", "coverage95", "n_completed", "n_failed"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in &m.rows {
        w.write_record([
            r.scenario.to_string(),
            r.method.name().to_string(),
            r.target.name().to_string(),
            opt(r.bias),
            opt(r.rmse),
            opt(r.coverage95),
            r.n_completed.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every method applied to one dataset, in the layout of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub rows: Vec<(Method, MethodResult)>,
}

/// Runs the full-data reference (when `full` is given) and the five study
/// methods on `observed`. Method `m` is sampled with `derive_seed(seed, [m])`.
pub fn compare_methods(
    observed: &IpdDataset,
    full: Option<&IpdDataset>,
    cfg: &MethodConfig,
    seed: u64,
) -> Result<CompareReport> {
    let methods = full.iter().map(|_| Method::FullData).chain(STUDY_METHODS);
    let rows = methods
        .map(|m| apply_method(m, observed, full, cfg, derive_seed(seed, &[m.index()])).map(|r| (m, r)))
        .collect::<Result<_>>()?;
    Ok(CompareReport { seed, rows })
}

pub fn write_compare_table<W: Write>(report: &CompareReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "beta_x_median", "beta_x_low", "beta_x_high", "tau_median", "tau_low", "tau_high"])?;
    for (m, r) in &report.rows {
        let t = |f: fn(&Estimate) -> f64| r.tau.as_ref().map_or(String::new(), |e| f(e).to_string());
        w.write_record([
            m.name().to_string(),
            r.beta_x.median.to_string(),
            r.beta_x.ci_low.to_string(),
            r.beta_x.ci_high.to_string(),
            t(|e| e.median),
            t(|e| e.ci_low),
            t(|e| e.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(median: f64, lo: f64, hi: f64) -> Estimate {
        Estimate { median, ci_low: lo, ci_high: hi }
    }

    #[test]
    fn metric_arithmetic() {
        let (b, r, c) = point_metrics(&[est(1.1, 0.5, 1.5), est(0.9, 1.2, 1.4)], 1.0).unwrap();
        assert!(b.abs() < 1e-12);
        assert!((r - 0.1).abs() < 1e-12);
        assert_eq!(c, 0.5);
        assert!(matches!(point_metrics(&[], 1.0), Err(Error::NoCompletedReplications)));
    }

    fn fake(scenario: u8, rep: usize, beta: f64, fail: bool) -> ReplicationResult {
        let r = MethodResult { beta_x: est(beta, beta - 0.5, beta + 0.5), tau: Some(est(0.2, 0.0, 0.4)), unstable_studies: 0 };
        ReplicationResult {
            scenario,
            rep,
            seed: rep as u64,
            outcome: if fail { Err("timeout".into()) } else { Ok(STUDY_METHODS.iter().map(|&m| (m, r)).collect()) },
        }
    }

    #[test]
    fn removal_rule_and_order_independence() {
        let a = vec![fake(1, 0, 1.1, false), fake(1, 1, 0.0, true), fake(1, 2, 0.9, false)];
        let mut b = a.clone();
        b.reverse();
        let ma = aggregate(&a, 1).unwrap();
        assert_eq!(ma, aggregate(&b, 1).unwrap());
        let row = ma.iter().find(|r| r.method == Method::Naive && r.target == Target::BetaX).unwrap();
        assert_eq!((row.n_completed, row.n_failed), (2, 1));
        assert!(row.bias.unwrap().abs() < 1e-12);
        let all_failed = aggregate(&[fake(1, 0, 0.0, true)], 1).unwrap();
        assert!(all_failed.iter().all(|r| r.bias.is_none() && r.n_failed == 1));
    }

    #[test]
    fn raw_table_round_trip() {
        let raw = vec![fake(1, 0, 1.1234567890123, false), fake(1, 1, 0.0, true), fake(2, 0, 0.7, false)];
        let mut buf = Vec::new();
        write_raw_table(&raw, &mut buf).unwrap();
        let back = read_raw_table(buf.as_slice()).unwrap();
        assert_eq!(back, raw);
        assert_eq!(aggregate_all(&back).unwrap(), aggregate_all(&raw).unwrap());
    }

    #[test]
    fn method_names_round_trip() {
        for m in STUDY_METHODS.into_iter().chain([Method::FullData]) {
            assert_eq!(Method::from_name(m.name()), Some(m));
        }
    }
}
