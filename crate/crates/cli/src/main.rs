use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use classa_cli::config::{parse_list, parse_range};
use classa_cli::{sweep, table, validate, ConfigError, ExperimentConfig};
use classa_cli::{EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
use classa_core::{Criterion, Nonlinearity};

#[derive(Parser)]
#[command(
    name = "classa",
    version,
    about = "Threshold and performance sweeps for estimators in Class-A noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal SL/BN thresholds per scenario and criterion.
    Thresholds(Overrides),
    /// Closed-form and Monte Carlo MSE/SNR, on the alpha grid or at the optimal thresholds.
    Perf(Overrides),
    /// Run the property and oracle checks; nonzero exit on any failure.
    Validate(Overrides),
    /// Dump raw Class-A noise samples.
    Sample(Overrides),
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated impulsive indices.
    #[arg(long = "A", allow_hyphen_values = true)]
    impulsive_index: Option<String>,
    /// Comma-separated Gaussian factors.
    #[arg(long = "T", allow_hyphen_values = true)]
    gauss_ratio: Option<String>,
    /// Comma-separated SNR_tot values in dB.
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// start:step:stop, inclusive.
    #[arg(long = "alpha-grid")]
    alpha_grid: Option<String>,
    #[arg(long = "source-power")]
    source_power: Option<f64>,
    /// Comma-separated: SL, BN.
    #[arg(long)]
    estimators: Option<String>,
    /// Comma-separated: MMSE, MSNR.
    #[arg(long)]
    criteria: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
}

fn parse_names<T>(spec: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| ConfigError(format!("unknown name {s:?}"))))
        .collect()
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.impulsive_index {
            c.impulsive_index = parse_list(v)?;
        }
        if let Some(v) = &self.gauss_ratio {
            c.gauss_ratio = parse_list(v)?;
        }
        if let Some(v) = &self.snr_db {
            c.snr_db = parse_list(v)?;
        }
        if let Some(v) = &self.alpha_grid {
            c.alpha_grid = Some(parse_range(v)?);
        }
        if let Some(v) = &self.estimators {
            c.estimators = parse_names(v, |s| match s {
                "SL" => Some(Nonlinearity::SoftLimiter),
                "BN" => Some(Nonlinearity::Blanker),
                _ => None,
            })?;
        }
        if let Some(v) = &self.criteria {
            c.criteria = parse_names(v, |s| match s {
                "MMSE" => Some(Criterion::Mmse),
                "MSNR" => Some(Criterion::Msnr),
                _ => None,
            })?;
        }
        c.out = self.out.clone().or(c.out);
        c.seed = self.seed.unwrap_or(c.seed);
        c.n_samples = self.samples.unwrap_or(c.n_samples);
        c.truncation = self.truncation.unwrap_or(c.truncation);
        c.workers = self.workers.or(c.workers);
        c.source_power = self.source_power.unwrap_or(c.source_power);
        c.epsilon = self.epsilon.unwrap_or(c.epsilon);
        c.mu = self.mu.unwrap_or(c.mu);
        c.n_max = self.n_max.unwrap_or(c.n_max);
        c.validate()?;
        Ok(c)
    }
}

fn sink(config: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &config.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Returns the process exit code.
fn run(cli: Cli) -> Result<i32> {
    let (Command::Thresholds(o) | Command::Perf(o) | Command::Validate(o) | Command::Sample(o)) = &cli.command;
    let config = o.resolve()?;
    match cli.command {
        Command::Thresholds(_) => {
            let rows = sweep::run_thresholds(&config)?;
            table::write_csv(sink(&config)?, &rows)?;
        }
        Command::Perf(_) => {
            let rows = sweep::run_perf(&config)?;
            table::write_csv(sink(&config)?, &rows)?;
        }
        Command::Sample(_) => classa_cli::run_sample(&config, sink(&config)?)?,
        Command::Validate(_) => {
            let report = validate::run_validate(&config)?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {} [{}] {}", c.name, c.scenario, c.detail);
            }
            eprintln!("{} passed, {} failed", report.passed, report.failed);
            let mut out = sink(&config)?;
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            out.flush()?;
            if !report.ok() {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            };
            ExitCode::from(code as u8)
        }
    }
}
