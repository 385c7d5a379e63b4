//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.
//!
//! `cargo test --release --test acceptance -- 1 2 7` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use misclass::comparators::{admeta_random_effects, inverse_variance_pool, per_study_mle, StudyEstimate};
use misclass::data::{IpdDataset, ParticipantRecord};
use misclass::diagnostics::{ess, split_rhat, summarize};
use misclass::likelihood::logit;
use misclass::model::{preset, Family, ParamState, PriorConfig};
use misclass::rng::stream;
use misclass::sampler::{fit, Chain, SamplerConfig};
use misclass::simstudy::{compare_methods, run_scenarios, HarnessConfig, Method, MethodConfig, Target, STUDY_METHODS};
use misclass::simulate::{empirical_sens_spec, simulate_dengue, DengueScenarioConfig};
use rand::Rng as _;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// 1. Posterior means against enumeration x quadrature.

/// ln P(obs | eta) for a logistic model.
fn ln_bern(obs: bool, eta: f64) -> f64 {
    let s = if obs { eta } else { -eta };
    -(1.0 + (-s).exp()).ln()
}

fn ln_normal(v: f64, sd: f64) -> f64 {
    -0.5 * (v / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// ln of the integral and the posterior mean of a 1-D factor on a grid.
fn quad1(grid: &[f64], ln_f: impl Fn(f64) -> f64) -> (f64, f64) {
    let h = grid[1] - grid[0];
    let lv: Vec<f64> = grid.iter().map(|&g| ln_f(g)).collect();
    let lz = log_sum_exp(&lv);
    let mean = grid.iter().zip(&lv).map(|(g, l)| g * (l - lz).exp()).sum();
    (lz + h.ln(), mean)
}

/// Same for a 2-D factor; returns the means of both coordinates.
fn quad2(grid: &[f64], ln_f: impl Fn(f64, f64) -> f64) -> (f64, f64, f64) {
    let h = grid[1] - grid[0];
    let mut lv = Vec::with_capacity(grid.len() * grid.len());
    for &a in grid {
        for &b in grid {
            lv.push(ln_f(a, b));
        }
    }
    let lz = log_sum_exp(&lv);
    let (mut ma, mut mb) = (0.0, 0.0);
    for (ia, &a) in grid.iter().enumerate() {
        for (ib, &b) in grid.iter().enumerate() {
            let w = (lv[ia * grid.len() + ib] - lz).exp();
            ma += a * w;
            mb += b * w;
        }
    }
    (lz + 2.0 * h.ln(), ma, mb)
}

fn criterion_1() -> Outcome {
    // Study 1 observes x; study 2 only the surrogate. (x, x*, y)
    let gold = [(true, true, true), (true, true, false), (true, false, true), (false, false, false), (false, true, false), (false, false, true)];
    let latent = [(true, true), (true, false), (false, false), (false, true), (true, true), (false, false)];
    let mut recs: Vec<ParticipantRecord> =
        gold.iter().map(|&(x, xs, y)| ParticipantRecord::new(0, y, Some(x), Some(xs), vec![])).collect();
    recs.extend(latent.iter().map(|&(xs, y)| ParticipantRecord::new(1, y, None, Some(xs), vec![])));
    let d = IpdDataset::new(recs, 2, 0);

    // Oracle: sum over all 2^6 latent configurations; given x the posterior
    // factorizes into (lambda), (phi), (gamma00) and (beta00, beta20).
    let sd = 2.0;
    let g1: Vec<f64> = (0..=4800).map(|i| -12.0 + i as f64 * 0.005).collect();
    let g2: Vec<f64> = (0..=500).map(|i| -10.0 + i as f64 * 0.04).collect();
    let m = latent.len();
    let mut ln_w = Vec::new();
    let mut means = Vec::new();
    for cfg in 0..(1u32 << m) {
        let mut rows: Vec<(bool, bool, bool)> = gold.to_vec();
        rows.extend(latent.iter().enumerate().map(|(i, &(xs, y))| ((cfg >> i) & 1 == 1, xs, y)));
        let (la, lam) = quad1(&g1, |l| {
            ln_normal(l, sd) + rows.iter().filter(|r| r.0).map(|r| ln_bern(r.1, l)).sum::<f64>()
        });
        let (lp, phi) = quad1(&g1, |p| {
            ln_normal(p, sd) + rows.iter().filter(|r| !r.0).map(|r| ln_bern(r.1, p)).sum::<f64>()
        });
        let (lg, gam) = quad1(&g1, |g| ln_normal(g, sd) + rows.iter().map(|r| ln_bern(r.0, g)).sum::<f64>());
        let (lb, b0, b2) = quad2(&g2, |b0, b2| {
            ln_normal(b0, sd)
                + ln_normal(b2, sd)
                + rows.iter().map(|r| ln_bern(r.2, b0 + if r.0 { b2 } else { 0.0 })).sum::<f64>()
        });
        ln_w.push(la + lp + lg + lb);
        means.push([lam, phi, gam, b0, b2]);
    }
    let lz = log_sum_exp(&ln_w);
    let mut oracle = [0.0; 5];
    for (lw, mv) in ln_w.iter().zip(&means) {
        let w = (lw - lz).exp();
        for k in 0..5 {
            oracle[k] += w * mv[k];
        }
    }

    let cfg = SamplerConfig { adapt_n: 1000, warmup_n: 2000, keep_n: 400_000, thin: 4, ..SamplerConfig::analysis(101) };
    let draws = fit(&preset("eq1-2-3").unwrap(), &d, &cfg).unwrap();
    let s = summarize(&draws);
    let names = ["lambda00", "phi00", "gamma00", "beta00", "beta20"];
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, n) in names.iter().enumerate() {
        let p = s.get(n).unwrap();
        let mcse = p.sd / p.ess.unwrap().sqrt();
        let tol = (3.0 * mcse).max(0.05);
        let ok = (p.mean - oracle[k]).abs() <= tol;
        pass &= ok;
        detail.push(format!("{n} {:.3} vs {:.3} (tol {:.3})", p.mean, oracle[k], tol));
    }
    outcome(pass, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 2. Latent full conditional under frozen parameters.

fn criterion_2() -> Outcome {
    let recs = vec![
        ParticipantRecord::new(0, true, None, Some(true), vec![]),
        ParticipantRecord::new(0, false, Some(false), Some(false), vec![]),
    ];
    let d = IpdDataset::new(recs, 1, 0);
    let mut state = ParamState::with_exposures(1, 0, vec![false, false]);
    state.block_mut(Family::Lambda).intercept = logit(0.9);
    state.block_mut(Family::Phi).intercept = logit(0.1);
    state.block_mut(Family::Beta2).intercept = logit(0.8);
    let mut chain = Chain::from_dataset(&preset("eq1-2-3").unwrap(), &d, state).unwrap();
    let mut rng = stream(2, &[0]);
    let n = 100_000;
    let mut hits = 0usize;
    for _ in 0..n {
        chain.update_latent_x(&mut rng).unwrap();
        hits += chain.state().x[0] as usize;
    }
    let truth = 0.9 * 0.8 / (0.9 * 0.8 + 0.1 * 0.5);
    let freq = hits as f64 / n as f64;
    let mcse = (truth * (1.0 - truth) / n as f64).sqrt();
    outcome((freq - truth).abs() <= 3.0 * mcse, format!("frequency {freq:.4} vs {truth:.4} (3 MC-SE = {:.4})", 3.0 * mcse))
}

// ---------------------------------------------------------------------------
// 3. Generator fidelity.

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (scenario, seed, sens, spec) in [(1u8, 1u64, 0.81, 0.90), (2, 2, 0.78, 0.96)] {
        let data = simulate_dengue(&DengueScenarioConfig::scenario(scenario).unwrap(), seed);
        let r = empirical_sens_spec(&data.full).pooled;
        let (se, sp) = (r.sensitivity.unwrap(), r.specificity.unwrap());
        pass &= data.full.len() == 7000 && (se - sens).abs() <= 0.03 && (sp - spec).abs() <= 0.03;
        detail.push(format!("scenario {scenario}: sens {se:.3} (target {sens}), spec {sp:.3} (target {spec})"));
    }
    outcome(pass, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 4. Dengue example ordering.

fn criterion_4() -> Outcome {
    let data = simulate_dengue(&DengueScenarioConfig::scenario(1).unwrap(), 1);
    let cfg = MethodConfig::new(preset("eq8-5-3").unwrap(), SamplerConfig::desk(0));
    let report = compare_methods(&data.observed, Some(&data.full), &cfg, 41).unwrap();
    let med = |m: Method| report.rows.iter().find(|(mm, _)| *mm == m).unwrap().1.beta_x.median;
    let (naive, cc, full, mis) =
        (med(Method::Naive), med(Method::CompleteCase), med(Method::FullData), med(Method::Misclassification));
    let a = naive < cc - 0.15 && naive < full - 0.15;
    let b = naive < mis && mis < full && (mis - full).abs() < 0.15;
    let c = report.rows.iter().all(|(_, r)| r.beta_x.ci_low > 0.0 || r.beta_x.ci_high < 0.0);
    let table: Vec<String> = report
        .rows
        .iter()
        .map(|(m, r)| format!("{} {:.2} ({:.2} : {:.2})", m.name(), r.beta_x.median, r.beta_x.ci_low, r.beta_x.ci_high))
        .collect();
    outcome(a && b && c, format!("(a) {a} (b) {b} (c) {c}; {}", table.join(", ")))
}

// ---------------------------------------------------------------------------
// 5 and 6. Simulation mini-study.

fn criteria_5_and_6() -> (Outcome, Outcome) {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let out = run_scenarios(&[1], 100, 2024, jobs, &HarnessConfig::desk()).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let m = &out.metrics;
    let row = |method, target| m.get(1, method, target).unwrap();
    let beta = |method| row(method, Target::BetaX);
    let (naive, mis, cc) = (beta(Method::Naive), beta(Method::Misclassification), beta(Method::CompleteCase));
    let c5 = naive.bias.unwrap() < -0.05
        && mis.bias.unwrap().abs() < 0.05
        && mis.rmse.unwrap() <= cc.rmse.unwrap()
        && mis.coverage95.unwrap() >= 0.90;
    let d5 = format!(
        "completed {}/100 in {minutes:.1} min on {jobs} worker(s); bias naive {:.3}, bias misclass {:.3}, rmse misclass {:.3} vs complete-case {:.3}, coverage misclass {:.2}",
        mis.n_completed,
        naive.bias.unwrap(),
        mis.bias.unwrap(),
        mis.rmse.unwrap(),
        cc.rmse.unwrap(),
        mis.coverage95.unwrap()
    );
    let taus: Vec<(Method, f64)> =
        STUDY_METHODS.iter().map(|&mm| (mm, row(mm, Target::TauBetaX).bias.unwrap())).collect();
    let c6 = taus.iter().all(|(_, b)| *b > 0.0);
    let d6 = taus.iter().map(|(mm, b)| format!("{} {b:+.3}", mm.name())).collect::<Vec<_>>().join(", ");
    (outcome(c5, d5), outcome(c6, format!("bias(tau_beta_x): {d6}")))
}

// ---------------------------------------------------------------------------
// 7. Diagnostics on chains with known behaviour.

fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
    let mut r = stream(seed, &[7]);
    let mut v: f64 = r.sample(StandardNormal);
    (0..n)
        .map(|_| {
            let out = v;
            v = rho * v + (1.0 - rho * rho).sqrt() * r.sample::<f64, _>(StandardNormal);
            out
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let n = 10_000.0;
    let iid = vec![ar1(1, 5000, 0.0), ar1(2, 5000, 0.0)];
    let (rh, e) = (split_rhat(&iid).unwrap(), ess(&iid).unwrap());
    let ar = vec![ar1(3, 5000, 0.9), ar1(4, 5000, 0.9)];
    let e_ar = ess(&ar).unwrap();
    let pass = (1.0..=1.01).contains(&rh) && (e - n).abs() <= 0.15 * n && (e_ar - n / 19.0).abs() <= 0.3 * n / 19.0;
    outcome(pass, format!("iid: rhat {rh:.4}, ess {e:.0} of {n}; AR(1) 0.9: ess {e_ar:.0} vs {:.0}", n / 19.0))
}

// ---------------------------------------------------------------------------
// 8. Byte-identical CLI outputs.

fn run_cli(args: &[&str], cwd: &Path, threads: &str) {
    let o = Command::new(env!("CARGO_BIN_EXE_misclass"))
        .args(args)
        .current_dir(cwd)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn same_files(a: &Path, b: &Path) -> Vec<String> {
    let mut diff = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        if std::fs::read(a.join(&n)).ok() != std::fs::read(b.join(&n)).ok() {
            diff.push(format!("{}/{}", b.display(), n.to_string_lossy()));
        }
    }
    diff
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let short = SamplerConfig { adapt_n: 200, warmup_n: 200, keep_n: 400, thin: 2, ..SamplerConfig::desk(9) };
    std::fs::write(p.join("sampler.json"), serde_json::to_string_pretty(&short).unwrap()).unwrap();
    let harness = HarnessConfig { sampler: short, ..HarnessConfig::desk() };
    std::fs::write(p.join("harness.json"), serde_json::to_string_pretty(&harness).unwrap()).unwrap();

    let mut diffs = Vec::new();
    for run in ["a", "b"] {
        run_cli(&["simulate", "dengue", "--scenario", "3", "--seed", "5", "--out", &format!("dengue_{run}")], p, "1");
        run_cli(&["simulate", "study", "--scenario", "8", "--seed", "5", "--out", &format!("study_{run}")], p, "1");
    }
    diffs.extend(same_files(&p.join("dengue_a"), &p.join("dengue_b")));
    diffs.extend(same_files(&p.join("study_a"), &p.join("study_b")));

    for (run, threads) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out = format!("fit_{run}");
        run_cli(&["fit", "--data", "study_a/observed.csv", "--model", "eq8-5-11", "--sampler", "sampler.json", "--out", &out], p, threads);
    }
    diffs.extend(same_files(&p.join("fit_a"), &p.join("fit_b")));
    diffs.extend(same_files(&p.join("fit_a"), &p.join("fit_c")));

    for (run, jobs) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out = format!("sims_{run}");
        run_cli(
            &["simstudy", "--scenarios", "5,1", "--reps", "2", "--seed", "3", "--jobs", jobs, "--config", "harness.json", "--out", &out],
            p,
            "8",
        );
    }
    diffs.extend(same_files(&p.join("sims_a"), &p.join("sims_b")));
    diffs.extend(same_files(&p.join("sims_a"), &p.join("sims_c")));
    let raw = std::fs::read_to_string(p.join("sims_a/raw_replications.csv")).unwrap();
    let rows = raw.lines().count() - 1;
    outcome(diffs.is_empty(), format!("simulate x2, fit x3 (1/1/8 threads), simstudy x3 (--jobs 1/1/8, {rows} raw rows); differing files: {diffs:?}"))
}

// ---------------------------------------------------------------------------
// 9. Comparator correctness.

fn criterion_9() -> Outcome {
    let mut recs = Vec::new();
    for (n, x, y) in [(20, true, true), (10, true, false), (10, false, true), (20, false, false)] {
        recs.extend((0..n).map(|_| ParticipantRecord::new(0, y, Some(x), Some(x), vec![])));
    }
    let f = per_study_mle(&IpdDataset::new(recs, 1, 0), false).unwrap();
    let mle_ok = (f.coef[1] - 4f64.ln()).abs() < 1e-6 && (f.se[1] - 0.3f64.sqrt()).abs() < 1e-6;

    let est: Vec<StudyEstimate> = [(0.4, 0.2), (0.9, 0.35), (0.7, 0.15), (1.3, 0.5), (0.2, 0.25)]
        .iter()
        .enumerate()
        .map(|(j, &(e, s))| StudyEstimate { study: j, est: e, se: s })
        .collect();
    let (pooled, _) = inverse_variance_pool(&est);
    // A flat prior on mu: inverse-variance pooling is its posterior mean.
    let priors = PriorConfig { coef_sd: 1e6, ..Default::default() };
    let cfg = SamplerConfig { keep_n: 100_000, thin: 1, ..SamplerConfig::desk(77) };
    let fit = admeta_random_effects(&est, &priors, &cfg, Some(0.0)).unwrap();
    let mcse = fit.mu.sd / fit.mu.ess.unwrap().sqrt();
    let meta_ok = (fit.mu.mean - pooled).abs() <= 3.0 * mcse;
    outcome(
        mle_ok && meta_ok,
        format!(
            "coef_x {:.8} vs ln 4, se {:.8} vs sqrt 0.3; admeta mu {:.4} vs pooled {pooled:.4} (3 MC-SE {:.4})",
            f.coef[1],
            f.se[1],
            fit.mu.mean,
            3.0 * mcse
        ),
    )
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut record = |n: u32, o: Outcome, t: Instant| {
        println!("criterion {n}: {}  [{:.1}s] {}", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), o.detail);
        results.push((n, o));
    };
    let singles: [(u32, fn() -> Outcome); 7] =
        [(9, criterion_9), (7, criterion_7), (2, criterion_2), (3, criterion_3), (1, criterion_1), (8, criterion_8), (4, criterion_4)];
    for (n, f) in singles {
        if want(n) {
            let t = Instant::now();
            record(n, guarded(f), t);
        }
    }
    if want(5) || want(6) {
        let t = Instant::now();
        match catch_unwind(criteria_5_and_6) {
            Ok((o5, o6)) => {
                record(5, o5, t);
                record(6, o6, t);
            }
            Err(_) => {
                record(5, outcome(false, "mini-study panicked"), t);
                record(6, outcome(false, "mini-study panicked"), t);
            }
        }
    }
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {} passed, {} failed {failed:?}", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
