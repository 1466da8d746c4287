//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! analysis, 3 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use modeshift_core::fuzzy::{self, Acceleration, Prediction};
use modeshift_core::metrics::{aggregate, Report, RunSummary};
use modeshift_core::modemgr::TriggerKind;
use modeshift_core::sim::{run_with, SimOptions};
use modeshift_core::{Horizon, Policy, SystemConfig, Time};

use crate::analyze::analyze;
use crate::config;
use crate::matrix::{self, Matrix};
use crate::output::{self, OutputDir, SERIES_LIMIT};

pub const OUT_ENV: &str = "MODESHIFT_OUT";
const DEFAULT_OUT: &str = "modeshift-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "modeshift", version, about = "Mode-change analysis and proactive mixed-criticality simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// TOML system configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundled configuration.
    #[arg(long, value_parser = ["validation", "case-study"])]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct OptionalSource {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["validation", "case-study"])]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Edf,
    Fp,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Edf => Policy::Edf,
            PolicyArg::Fp => Policy::Fp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TriggerArg {
    Mono,
    Reactive,
    Fuzzy,
    FuzzyPredictor,
    Random,
}

impl From<TriggerArg> for TriggerKind {
    fn from(t: TriggerArg) -> Self {
        match t {
            TriggerArg::Mono => TriggerKind::Mono,
            TriggerArg::Reactive => TriggerKind::Reactive,
            TriggerArg::Fuzzy => TriggerKind::Fuzzy,
            TriggerArg::FuzzyPredictor => TriggerKind::FuzzyPredictor,
            TriggerArg::Random => TriggerKind::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Response-time table of every mode and latency of every transition.
    Analyze {
        #[command(flatten)]
        source: Source,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
        /// Also write analysis.csv and transitions.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario and write its artifacts.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Defaults to `random` for configurations with a request rate,
        /// `fuzzy-predictor` otherwise.
        #[arg(long, value_enum)]
        trigger: Option<TriggerArg>,
        /// Defaults to the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated time units, overriding the configured horizon.
        #[arg(long)]
        horizon: Option<Time>,
        #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
        out: PathBuf,
        /// Record the per-event trace.
        #[arg(long)]
        trace: bool,
        /// Do not cut series and prediction files at 500 rows.
        #[arg(long)]
        full_series: bool,
    },
    /// Run every (policy, trigger, seed) cell and tabulate.
    RunMatrix {
        #[command(flatten)]
        source: Source,
        /// Comma-separated; defaults to the configured policy.
        #[arg(long, value_enum, value_delimiter = ',')]
        policies: Vec<PolicyArg>,
        /// Comma-separated; defaults to mono, reactive, fuzzy and
        /// fuzzy-predictor.
        #[arg(long, value_enum, value_delimiter = ',')]
        triggers: Vec<TriggerArg>,
        /// Seeds as a list and/or inclusive ranges, e.g. `1-10` or `1,4,9`.
        /// Defaults to the configured repetitions.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
        out: PathBuf,
        /// Also write trace, series and prediction files for every cell.
        #[arg(long)]
        detail: bool,
        #[arg(long)]
        full_series: bool,
    },
    /// Re-tabulate the summaries of an earlier run-matrix.
    Report {
        /// Directory holding summaries.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Also write the tables and CSVs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuzzy engine utilities.
    Fuzzy {
        #[command(subcommand)]
        command: FuzzyCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum FuzzyCommand {
    /// Show fuzzification, rule firing and the crisp risk of one input pair.
    Eval {
        /// Normalized laxity slope in [-1, 1].
        #[arg(long, allow_negative_numbers = true)]
        acceleration: f64,
        /// Forecast worst-case laxity in [-1, 1].
        #[arg(long, allow_negative_numbers = true)]
        prediction: f64,
        #[command(flatten)]
        source: OptionalSource,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Parse `args` (program name first), run, and return the exit code.
/// Normal output goes to `stdout`, diagnostics to `stderr`.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.code()
        }
    }
}

fn load(source: &Source) -> Result<SystemConfig, Failure> {
    match (&source.config, &source.preset) {
        (Some(path), None) => Ok(config::load(path)?),
        (None, Some(name)) => Ok(config::preset(name)?),
        _ => Err(Failure::Usage("exactly one of --config and --preset is required".into())),
    }
}

/// Parse `1-10,12` style seed lists.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(seeds)
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Analyze { source, csv, out } => {
            let cfg = load(&source)?;
            let a = analyze(&cfg);
            if csv {
                a.write_tasks_csv(&mut *stdout).context("cannot write CSV")?;
            } else {
                write!(stdout, "{}", a.to_text()).context("cannot write output")?;
            }
            if let Some(out) = out {
                let mut dir = OutputDir::create(&out)?;
                dir.csv("analysis.csv", |b| a.write_tasks_csv(b))?;
                dir.csv("transitions.csv", |b| a.write_transitions_csv(b))?;
                dir.write_manifest()?;
            }
            if a.infeasible() {
                return Err(Failure::Infeasible(format!("{} is not schedulable", cfg.name)));
            }
            Ok(())
        }
        Command::Simulate { source, policy, trigger, seed, horizon, out, trace, full_series } => {
            let mut cfg = load(&source)?;
            if let Some(p) = policy {
                cfg.policy = p.into();
            }
            if let Some(h) = horizon {
                cfg.horizon = Horizon::Time(h);
            }
            let trigger: TriggerKind = match trigger {
                Some(t) => t.into(),
                None if cfg.request_mean.is_some() && !cfg.modes.is_empty() => TriggerKind::Random,
                None => TriggerKind::FuzzyPredictor,
            };
            let seed = seed.unwrap_or(cfg.seed);
            let options = SimOptions { trace, series: true, predictions: true };
            let run = run_with(&cfg, trigger, seed, options).map_err(|e| Failure::Runtime(e.into()))?;
            let limit = if full_series { None } else { Some(SERIES_LIMIT) };
            let mut dir = OutputDir::create(&out)?;
            output::write_run(&mut dir, &run, limit)?;
            let cell = aggregate(&[RunSummary::from(&run)]).map_err(|e| Failure::Runtime(e.into()))?;
            let report = Report::new(run.policy, std::slice::from_ref(&cell));
            dir.csv("cells.csv", |b| output::write_cells_csv(b, std::slice::from_ref(&cell)))?;
            dir.csv("metrics.csv", |b| output::write_report_csv(b, &report))?;
            let text = simulate_text(&run, &report);
            dir.write("table.txt", text.as_bytes())?;
            dir.write_manifest()?;
            write!(stdout, "{text}").context("cannot write output")?;
            Ok(())
        }
        Command::RunMatrix { source, policies, triggers, seeds, out, detail, full_series } => {
            let cfg = load(&source)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s).map_err(Failure::Usage)?,
                None => cfg.repetition_seeds(),
            };
            if seeds.is_empty() {
                return Err(Failure::Usage("empty seed list".into()));
            }
            let policies: Vec<Policy> =
                if policies.is_empty() { vec![cfg.policy] } else { policies.into_iter().map(Into::into).collect() };
            let triggers: Vec<TriggerKind> = if triggers.is_empty() {
                TriggerKind::CASE_STUDY.to_vec()
            } else {
                triggers.into_iter().map(Into::into).collect()
            };
            let m = Matrix {
                config: cfg,
                policies,
                triggers,
                seeds,
                detail,
                series_limit: if full_series { None } else { Some(SERIES_LIMIT) },
            };
            let outcome = m.run(Some(&out))?;
            for r in &outcome.reports {
                writeln!(stdout, "{}", r.to_table()).context("cannot write output")?;
            }
            writeln!(
                stdout,
                "{} runs, {} failed, output in {}",
                outcome.summaries.len() + outcome.failures.len(),
                outcome.failures.len(),
                out.display()
            )
            .context("cannot write output")?;
            if !outcome.failures.is_empty() {
                let mut msg = String::from("some cells failed:");
                for (k, e) in &outcome.failures {
                    let _ = write!(msg, "\n  {} {} seed {}: {}", k.policy.as_str(), k.trigger.as_str(), k.seed, e);
                }
                return Err(Failure::Runtime(anyhow::anyhow!(msg)));
            }
            Ok(())
        }
        Command::Report { input, format, out } => {
            let summaries = read_summaries(&input)?;
            let (cells, reports) = matrix::summarize(&summaries)?;
            match format {
                Format::Table => {
                    for r in &reports {
                        writeln!(stdout, "{}", r.to_table()).context("cannot write output")?;
                    }
                }
                Format::Csv => output::write_cells_csv(&mut *stdout, &cells).context("cannot write CSV")?,
            }
            if let Some(out) = out {
                let mut dir = OutputDir::create(&out)?;
                matrix::write_reports(&mut dir, &cells, &reports)?;
                dir.write_manifest()?;
            }
            Ok(())
        }
        Command::Fuzzy { command: FuzzyCommand::Eval { acceleration, prediction, source } } => {
            let fuzzy_cfg = match (&source.config, &source.preset) {
                (None, None) => fuzzy::FuzzyConfig::default(),
                (config, preset) => load(&Source { config: config.clone(), preset: preset.clone() })?.fuzzy,
            };
            if !acceleration.is_finite() || !prediction.is_finite() {
                return Err(Failure::Usage("inputs must be finite".into()));
            }
            let text = fuzzy_text(&fuzzy::infer(acceleration, prediction, &fuzzy_cfg), fuzzy_cfg.threshold);
            write!(stdout, "{text}").context("cannot write output")?;
            Ok(())
        }
    }
}

fn read_summaries(input: &Path) -> Result<Vec<RunSummary>, Failure> {
    let path = input.join("summaries.json");
    let bytes = std::fs::read(&path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("malformed {}: {e}", path.display())))
}

fn simulate_text(run: &modeshift_core::sim::RunResult, report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} seed {}: horizon {}, released {}, missed {}, aborted {} ({} mid-execution), mode changes {}",
        run.policy.as_str(),
        run.trigger.as_str(),
        run.seed,
        run.horizon,
        run.released,
        run.missed,
        run.aborted,
        run.aborted_mid_execution,
        run.mode_changes.len()
    );
    for from in &run.modes {
        for to in &run.modes {
            if let Some(l) = run.max_latency(from, to) {
                let _ = writeln!(out, "max latency {from} -> {to}: {l}");
            }
        }
    }
    if run.trigger != TriggerKind::Random {
        out.push_str(&report.to_table());
    }
    out
}

fn fuzzy_text(inf: &fuzzy::Inference, threshold: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "acceleration {}", inf.acceleration);
    for a in Acceleration::ALL {
        let _ = writeln!(out, "  {:<8} {:.4}", format!("{a:?}"), inf.acceleration_degrees[a as usize]);
    }
    let _ = writeln!(out, "prediction {}", inf.prediction);
    for p in Prediction::ALL {
        let _ = writeln!(out, "  {:<8} {:.4}", format!("{p:?}"), inf.prediction_degrees[p as usize]);
    }
    let _ = write!(out, "firing  {:>8}", "");
    for p in Prediction::ALL {
        let _ = write!(out, " {:>8}", format!("{p:?}"));
    }
    out.push('\n');
    for a in Acceleration::ALL {
        let _ = write!(out, "        {:>8}", format!("{a:?}"));
        for p in Prediction::ALL {
            let _ = write!(out, " {:>8.4}", inf.firing[a as usize][p as usize]);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "output  Low {:.4} High {:.4}", inf.output_strength[0], inf.output_strength[1]);
    let decision = if fuzzy::decide(inf.risk, threshold) { "change mode" } else { "stay" };
    let _ = writeln!(out, "risk {:.6} (threshold {threshold}): {decision}", inf.risk);
    out
}
