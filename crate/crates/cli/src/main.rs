use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use jacobi_density::harness::{
    config_json, run_density_sweep, run_invariant_suite, to_json, validate_config, write_invariants_csv, write_sweep_csv,
    OutputFormat, RouteSet, RunConfig,
};
use jacobi_density::{FamilyKind, SpectralError};

const EXIT_TOLERANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "jacobi-density", version, about = "Spectral densities of unbounded Jacobi matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical-family density formula over the configured grid.
    DensityCritical(RunArgs),
    /// Non-critical-family density formula over the configured grid.
    DensityNoncritical(RunArgs),
    /// Stabilized-matrix densities at the configured indices.
    DensityStabilized(RunArgs),
    /// Formula, stabilized and resolvent routes side by side.
    Compare(RunArgs),
    /// Wronskian, decomposition, stabilization and branch checks.
    Invariants(RunArgs),
    /// Parse and check a configuration, printing its normalized form.
    Validate(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (dotted-key TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to output.path of the configuration, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides output.format of the configuration.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Omit the generation time from JSON output.
    #[arg(long)]
    no_timestamp: bool,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    jobs: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    /// Setup errors caused by the configured family or window reject the
    /// configuration; anything else is a numerical failure.
    fn from_run(e: SpectralError) -> Self {
        let code = match e {
            SpectralError::HypothesisViolation { .. }
            | SpectralError::WrongFamily { .. }
            | SpectralError::CriticalParameter { .. }
            | SpectralError::InvalidArgument(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", args.config.display())))?;
    validate_config(&text).map_err(|e| Failure::config(e.to_string()))
}

fn require_kind(config: &RunConfig, kind: FamilyKind) -> Result<(), Failure> {
    if config.family.kind() == kind {
        Ok(())
    } else {
        Err(Failure::config(format!("this subcommand needs family.kind = {kind:?}, got {:?}", config.family.kind())))
    }
}

fn format_of(args: &RunArgs, config: &RunConfig) -> OutputFormat {
    match args.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Json) => OutputFormat::Json,
        None => config.output.format,
    }
}

fn timestamp(args: &RunArgs) -> Option<u64> {
    if args.no_timestamp {
        return None;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn emit(args: &RunArgs, config: &RunConfig, bytes: &[u8]) -> Result<(), Failure> {
    let target: Option<&Path> = args.out.as_deref().or(config.output.path.as_deref());
    let result = match target {
        Some(path) => fs::write(path, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    result.map_err(|e| Failure { code: EXIT_NUMERIC, message: format!("cannot write output: {e}") })
}

fn sweep(args: &RunArgs, routes: RouteSet, kind: Option<FamilyKind>) -> Result<bool, Failure> {
    let config = load(args)?;
    if let Some(kind) = kind {
        require_kind(&config, kind)?;
    }
    let report = run_density_sweep(&config, routes, args.jobs).map_err(Failure::from_run)?;
    let bytes = match format_of(args, &config) {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_sweep_csv(&report, &mut buf).map_err(|e| Failure { code: EXIT_NUMERIC, message: e.to_string() })?;
            buf
        }
        OutputFormat::Json => to_json(&config, &report, timestamp(args)).into_bytes(),
    };
    emit(args, &config, &bytes)?;
    let s = &report.summary;
    eprintln!("rows: {}, failed rows: {}", s.rows, s.failed_rows);
    for c in &s.checks {
        eprintln!("{}: {:e} vs {:e} {}", c.name, c.value, c.tolerance, if c.passed { "PASS" } else { "FAIL" });
    }
    Ok(s.passed)
}

/// All routes; explicit families have no density formula.
fn compare(args: &RunArgs) -> Result<bool, Failure> {
    let explicit = load(args)?.family.kind() == FamilyKind::Explicit;
    sweep(args, RouteSet { formula: !explicit, ..RouteSet::ALL }, None)
}

fn invariants(args: &RunArgs) -> Result<bool, Failure> {
    let config = load(args)?;
    let report = run_invariant_suite(&config, args.jobs).map_err(Failure::from_run)?;
    let bytes = match format_of(args, &config) {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_invariants_csv(&report, &mut buf)
                .map_err(|e| Failure { code: EXIT_NUMERIC, message: e.to_string() })?;
            buf
        }
        OutputFormat::Json => to_json(&config, &report, timestamp(args)).into_bytes(),
    };
    emit(args, &config, &bytes)?;
    let failed = report.entries.iter().filter(|e| !e.passed).count();
    eprintln!("invariants: {} entries, {} failed", report.entries.len(), failed);
    for e in report.entries.iter().filter(|e| !e.passed) {
        eprintln!("FAIL {} at {:?}: {:e} vs {:e} ({})", e.name, e.lambda, e.value, e.tolerance, e.detail);
    }
    Ok(report.passed)
}

fn validate(args: &RunArgs) -> Result<bool, Failure> {
    let config = load(args)?;
    emit(args, &config, config_json(&config).as_bytes())?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::DensityCritical(a) => sweep(a, RouteSet::FORMULA, Some(FamilyKind::Critical)),
        Command::DensityNoncritical(a) => sweep(a, RouteSet::FORMULA, Some(FamilyKind::NonCritical)),
        Command::DensityStabilized(a) => sweep(a, RouteSet::STABILIZED, None),
        Command::Compare(a) => compare(a),
        Command::Invariants(a) => invariants(a),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_TOLERANCE),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
