//! Command-line runner: closed-loop simulation, RTI versus SQP comparison and
//! self-verification.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 runtime
//! failure, 3 a verification check failed.

pub mod config;
pub mod linear;
pub mod report;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rti_nmpc::controller::ControllerMode;
use rti_nmpc::par::Execution;
use rti_nmpc::sim::{run_batch, ScenarioConfig, SimError, SimLog};

use config::{ModeSelection, ModelKind, RunConfig};
use linear::LinearLog;
use report::{BenchmarkReport, HostInfo, ModeRun};
use verify::{Fault, Suite};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(issues) => Self::Validation(issues.iter().map(|i| i.to_string()).collect()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rti-nmpc",
    version,
    about = "Real-time-iteration NMPC for a four-wheel vehicle",
    after_help = "Any configuration key can be set with --section.key VALUE, e.g. --vehicle.mass 250 or --trajectory.kind=arc."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the closed loop and write the log and summary.
    Simulate(RunArgs),
    /// Run RTI and SQP on the same scenario and report timing and input agreement.
    Compare(RunArgs),
    /// Check Jacobians, the QP solver, the integrator and converged SQP plans.
    Verify(VerifyArgs),
    /// Print the effective configuration after the file, overrides and flags.
    Config(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file; keys not given keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rti, sqp or both (simulate only).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repetitions; simulate runs consecutive seeds, compare pools step times.
    #[arg(long)]
    reps: Option<usize>,
    /// Leave wall-clock columns out of logs and summaries.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, value_enum)]
    inject_fault: Option<Fault>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Separates `--section.key value` and `--section.key=value` overrides from
/// the arguments clap handles.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let name = arg.to_str().and_then(|s| s.strip_prefix("--")).filter(|s| {
            let key = s.split('=').next().unwrap_or("");
            key.contains('.') && !key.starts_with('.')
        });
        let Some(name) = name else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let key = name.to_string();
                let value = it
                    .next()
                    .and_then(|v| v.into_string().ok())
                    .ok_or_else(|| CliError::Validation(vec![format!("{key}: missing value")]))?;
                (key, value)
            }
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    match dispatch(args.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: Vec<OsString>) -> Result<(), CliError> {
    let (rest, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                Err(CliError::Validation(vec!["invalid command line".into()]))
            } else {
                Ok(())
            };
        }
    };
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, timing) = load(&a, &overrides)?;
            simulate(&cfg, timing)
        }
        Command::Compare(a) => {
            let (cfg, timing) = load(&a, &overrides)?;
            compare(&cfg, timing)
        }
        Command::Config(a) => {
            let (cfg, _) = load(&a, &overrides)?;
            print!("{}", cfg.to_text());
            Ok(())
        }
        Command::Verify(a) => {
            if !overrides.is_empty() {
                return Err(CliError::Validation(vec!["verify takes no configuration keys".into()]));
            }
            run_verify(&a)
        }
    }
}

/// File, then `--section.key` overrides, then the dedicated flags.
fn load(a: &RunArgs, overrides: &[(String, String)]) -> Result<(RunConfig, bool), CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
            RunConfig::from_text(&text).map_err(CliError::Validation)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides).map_err(CliError::Validation)?;
    if let Some(m) = &a.mode {
        cfg.mode = ModeSelection::parse(m)
            .ok_or_else(|| CliError::Validation(vec![format!("--mode: expected rti, sqp or both, got `{m}`")]))?;
    }
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(out) = &a.out {
        cfg.out = out.clone();
    }
    if let Some(reps) = a.reps {
        if reps == 0 {
            return Err(CliError::Validation(vec!["--reps: must be at least 1".into()]));
        }
        cfg.reps = reps;
    }
    cfg.verbose |= a.verbose;
    cfg.scenario.validate()?;
    Ok((cfg, !a.no_timing))
}

fn modes(sel: ModeSelection) -> Vec<ControllerMode> {
    match sel {
        ModeSelection::Rti => vec![ControllerMode::Rti],
        ModeSelection::Sqp => vec![ControllerMode::Sqp],
        ModeSelection::Both => vec![ControllerMode::Rti, ControllerMode::Sqp],
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn check_aborted(log: &SimLog) -> Result<(), CliError> {
    match &log.aborted {
        Some(why) => Err(CliError::Runtime(format!(
            "{} run with seed {} aborted: {why}",
            log.mode.as_str(),
            log.seed
        ))),
        None => Ok(()),
    }
}

fn run_linear(s: &ScenarioConfig, mode: ControllerMode) -> Result<LinearLog, CliError> {
    linear::run_linear(s, mode).map_err(|e| CliError::Runtime(e.to_string()))
}

fn simulate(cfg: &RunConfig, timing: bool) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)?;
    let mut aborted = Ok(());
    for mode in modes(cfg.mode) {
        let seeds: Vec<u64> = (0..cfg.reps as u64).map(|r| cfg.scenario.seed + r).collect();
        let name = |seed: u64, ext: &str| {
            if cfg.reps == 1 {
                format!("{}.{ext}", mode.as_str())
            } else {
                format!("{}-seed{seed}.{ext}", mode.as_str())
            }
        };
        match cfg.model {
            ModelKind::Bicycle => {
                let runs: Vec<_> = seeds
                    .iter()
                    .map(|&seed| (ScenarioConfig { seed, ..cfg.scenario.clone() }, mode))
                    .collect();
                let execution = if cfg.reps > 1 { Execution::Parallel } else { Execution::Sequential };
                for (log, &seed) in run_batch(&runs, execution).into_iter().zip(&seeds) {
                    let log = log?;
                    let summary = log.summary().to_text(timing);
                    write(&cfg.out.join(name(seed, "csv")), &log.csv_string(timing))?;
                    write(&cfg.out.join(name(seed, "summary.txt")), &summary)?;
                    print!("{summary}");
                    if aborted.is_ok() {
                        aborted = check_aborted(&log);
                    }
                }
            }
            ModelKind::DoubleIntegrator => {
                let log = run_linear(&cfg.scenario, mode)?;
                let summary = log.summary_text(timing);
                write(&cfg.out.join(name(cfg.scenario.seed, "csv")), &log.csv_string(timing))?;
                write(&cfg.out.join(name(cfg.scenario.seed, "summary.txt")), &summary)?;
                print!("{summary}");
            }
        }
        if cfg.verbose {
            eprintln!("{} done, output in {}", mode.as_str(), cfg.out.display());
        }
    }
    aborted
}

fn compare(cfg: &RunConfig, timing: bool) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)?;
    let mut runs: [Vec<ModeRun>; 2] = [Vec::new(), Vec::new()];
    let mut csv = [String::new(), String::new()];
    let (names, ranges): (Vec<&'static str>, Vec<f64>) = match cfg.model {
        ModelKind::Bicycle => (vec!["torque", "steer_rate"], cfg.scenario.weights.input_ranges.clone()),
        ModelKind::DoubleIntegrator => (vec!["accel"], linear::weights().input_ranges),
    };
    for rep in 0..cfg.reps {
        for (i, mode) in [ControllerMode::Rti, ControllerMode::Sqp].into_iter().enumerate() {
            let (run, text) = match cfg.model {
                ModelKind::Bicycle => {
                    let log = rti_nmpc::sim::run_closed_loop(&cfg.scenario, mode)?;
                    check_aborted(&log)?;
                    (ModeRun::from(&log), log.csv_string(timing))
                }
                ModelKind::DoubleIntegrator => {
                    let log = run_linear(&cfg.scenario, mode)?;
                    (ModeRun::from(&log), log.csv_string(timing))
                }
            };
            if rep == 0 {
                csv[i] = text;
            }
            runs[i].push(run);
            if cfg.verbose {
                eprintln!("rep {} {} done", rep + 1, mode.as_str());
            }
        }
    }
    write(&cfg.out.join("rti.csv"), &csv[0])?;
    write(&cfg.out.join("sqp.csv"), &csv[1])?;
    let report = BenchmarkReport::new(
        HostInfo::detect(&cfg.host),
        cfg.model.as_str(),
        &runs[0],
        &runs[1],
        &names,
        &ranges,
    );
    let text = report.to_text();
    write(&cfg.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_verify(a: &VerifyArgs) -> Result<(), CliError> {
    let mut failed = Vec::new();
    let mut log = String::new();
    for suite in a.suite.expand() {
        let result = verify::run_suite(suite, a.inject_fault, a.seed);
        let verdict = if result.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", suite.name(), result.summary);
        for f in result.failures.iter().take(5) {
            println!("  {f}");
        }
        if result.failures.len() > 5 {
            println!("  ... {} more", result.failures.len() - 5);
        }
        if !result.passed() {
            log.push_str(&format!("[{}] {}\n", suite.name(), result.summary));
            for f in &result.failures {
                log.push_str(f);
                log.push('\n');
            }
            failed.push(suite.name());
        }
    }
    if failed.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("verify-failures.txt");
    write(&path, &log)?;
    Err(CliError::Verification(format!(
        "failed suites: {}; failing cases written to {}",
        failed.join(", "),
        path.display()
    )))
}
