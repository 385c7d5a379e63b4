use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use misclass::data::IpdDataset;
use misclass::diagnostics::summarize;
use misclass::draws::DrawsMatrix;
use misclass::error::{Error, Result};
use misclass::model::{preset, ModelSpec};
use misclass::sampler::{fit, SamplerConfig};
use misclass::simstudy::{
    compare_methods, run_scenarios, write_compare_table, write_metrics_table, write_raw_csv, HarnessConfig,
    MethodConfig,
};
use misclass::simulate::{
    empirical_sens_spec, simulate_dengue, simulate_study, DengueScenarioConfig, SimScenarioConfig,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "misclass", version, about = "Misclassification-corrected IPD meta-analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Dengue,
    Study,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Analysis,
    Simulation,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (full and observed copies).
    Simulate {
        generator: Generator,
        #[arg(long)]
        scenario: u8,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write draws and a posterior summary.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Preset name or path to a model JSON file.
        #[arg(long)]
        model: String,
        /// Sampler JSON file; overrides --protocol.
        #[arg(long)]
        sampler: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "analysis")]
        protocol: Protocol,
        /// Required unless --sampler is given; overrides its seed otherwise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply every comparison method to one dataset.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        full_data: Option<PathBuf>,
        #[arg(long, default_value = "eq8-5-3")]
        model: String,
        #[arg(long)]
        sampler: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "analysis")]
        protocol: Protocol,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a draws file; exit 3 if any R-hat exceeds the threshold.
    Diagnose {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long, default_value_t = 1.05)]
        rhat_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulation study.
    Simstudy {
        /// Comma-separated scenario numbers.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        scenarios: Vec<u8>,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Use the full simulation-study sampler budget.
        #[arg(long)]
        paper_protocol: bool,
        /// Harness JSON file; overrides --paper-protocol.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn load_model(arg: &str) -> Result<ModelSpec> {
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        let spec: ModelSpec = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    } else {
        preset(arg)
    }
}

fn load_sampler(file: Option<&Path>, protocol: Protocol, seed: Option<u64>) -> Result<SamplerConfig> {
    let mut cfg = match file {
        Some(p) => read_json::<SamplerConfig>(p)?,
        None => {
            let seed = seed.ok_or_else(|| Error::Config("--seed is required without --sampler".into()))?;
            match protocol {
                Protocol::Analysis => SamplerConfig::analysis(seed),
                Protocol::Simulation => SamplerConfig::simulation(seed),
                Protocol::Desk => SamplerConfig::desk(seed),
            }
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_record(command: &str, seed: u64, config: serde_json::Value) -> serde_json::Value {
    json!({ "tool": "misclass", "version": VERSION, "command": command, "seed": seed, "config": config })
}

enum Outcome {
    Done,
    Breach,
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { generator, scenario, seed, out } => {
            std::fs::create_dir_all(&out)?;
            let (data, config) = match generator {
                Generator::Dengue => {
                    let cfg = DengueScenarioConfig::scenario(scenario)?;
                    (simulate_dengue(&cfg, seed), serde_json::to_value(&cfg)?)
                }
                Generator::Study => {
                    let cfg = SimScenarioConfig::scenario(scenario)?;
                    (simulate_study(&cfg, seed).0, serde_json::to_value(&cfg)?)
                }
            };
            data.full.write_csv(out.join("full.csv"))?;
            data.observed.write_csv(out.join("observed.csv"))?;
            let mut record = run_record("simulate", seed, config);
            record["generator"] = json!(match generator {
                Generator::Dengue => "dengue",
                Generator::Study => "study",
            });
            record["scenario"] = json!(scenario);
            record["sens_spec_full"] = serde_json::to_value(empirical_sens_spec(&data.full).pooled)?;
            write_json(out.join("run.json"), &record)?;
            Ok(Outcome::Done)
        }
        Command::Fit { data, model, sampler, protocol, seed, out } => {
            let spec = load_model(&model)?;
            let cfg = load_sampler(sampler.as_deref(), protocol, seed)?;
            let d = IpdDataset::read_csv(&data)?;
            std::fs::create_dir_all(&out)?;
            let draws = fit(&spec, &d, &cfg)?;
            draws.write_csv(out.join("draws.csv"))?;
            write_json(out.join("summary.json"), &summarize(&draws))?;
            write_json(out.join("model.json"), &spec)?;
            write_json(out.join("sampler.json"), &cfg)?;
            let mut record = run_record("fit", cfg.seed, json!({ "model": spec, "sampler": cfg }));
            record["data"] = json!(data.display().to_string());
            write_json(out.join("run.json"), &record)?;
            Ok(Outcome::Done)
        }
        Command::Compare { data, full_data, model, sampler, protocol, seed, out } => {
            let spec = load_model(&model)?;
            let cfg = load_sampler(sampler.as_deref(), protocol, seed)?;
            let observed = IpdDataset::read_csv(&data)?;
            let full = full_data.as_deref().map(IpdDataset::read_csv).transpose()?;
            std::fs::create_dir_all(&out)?;
            let mc = MethodConfig::new(spec, cfg.clone());
            let report = compare_methods(&observed, full.as_ref(), &mc, cfg.seed)?;
            write_json(out.join("report.json"), &report)?;
            write_compare_table(&report, std::fs::File::create(out.join("report.csv"))?)?;
            write_json(out.join("run.json"), &run_record("compare", cfg.seed, serde_json::to_value(&mc)?))?;
            Ok(Outcome::Done)
        }
        Command::Diagnose { draws, rhat_max, out } => {
            let d = DrawsMatrix::read_csv(&draws)?;
            let s = summarize(&d);
            println!("{:<16} {:>9} {:>9} {:>9} {:>9} {:>7} {:>8}", "param", "median", "2.5%", "97.5%", "sd", "rhat", "ess");
            let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
            for p in &s.params {
                println!(
                    "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>8}",
                    p.name,
                    p.median,
                    p.ci95_low,
                    p.ci95_high,
                    p.sd,
                    opt(p.rhat, 3),
                    opt(p.ess, 0)
                );
            }
            if let Some(out) = out {
                write_json(out, &s)?;
            }
            let breaches = s.rhat_breaches(rhat_max);
            if breaches.is_empty() {
                Ok(Outcome::Done)
            } else {
                let names: Vec<&str> = breaches.iter().map(|p| p.name.as_str()).collect();
                eprintln!("R-hat above {rhat_max}: {}", names.join(", "));
                Ok(Outcome::Breach)
            }
        }
        Command::Simstudy { scenarios, reps, seed, jobs, paper_protocol, config, timeout_secs, out } => {
            let mut cfg = match config {
                Some(p) => read_json::<HarnessConfig>(&p)?,
                None if paper_protocol => HarnessConfig::paper_protocol(),
                None => HarnessConfig::desk(),
            };
            if let Some(t) = timeout_secs {
                cfg.timeout_secs = t;
            }
            std::fs::create_dir_all(&out)?;
            let result = run_scenarios(&scenarios, reps, seed, jobs, &cfg)?;
            write_raw_csv(&result.raw, out.join("raw_replications.csv"))?;
            write_json(out.join("metrics.json"), &result.metrics)?;
            write_metrics_table(&result.metrics, std::fs::File::create(out.join("metrics.csv"))?)?;
            let mut record = run_record("simstudy", seed, serde_json::to_value(&cfg)?);
            record["scenarios"] = json!(scenarios);
            record["reps"] = json!(reps);
            write_json(out.join("run.json"), &record)?;
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Breach) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_sampler_failure() { 2 } else { 1 })
        }
    }
}
