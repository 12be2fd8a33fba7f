//! Command-line front end: synthetic data emission, fold planning, the two
//! experiment suites, and report regeneration.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 suite
//! finished with error rows.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use probcal::data::{stratified_kfold, DataError, RngSeed};
use probcal::ingest::{gen_synthetic, load_csv, write_csv, IngestError, SyntheticConfig};
use probcal::suite::{
    rebuild_reports, run_al_suite, run_calibration_suite, write_al_outputs, write_calib_outputs,
    ExperimentConfig, SuiteError, SyntheticSpec,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "probcal", version, about = "Probability calibration and active-learning experiment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature dataset and write it as CSV.
    Synth(SynthArgs),
    /// Compute a stratified fold plan for a dataset and write it as CSV.
    Split(SplitArgs),
    /// Run the calibration-technique comparison suite.
    Calib(SuiteArgs),
    /// Run the active-learning experiment matrix.
    Al(SuiteArgs),
    /// Rebuild aggregate tables from previously written per-run CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Total instance count (split 85/10/5 unless --counts is given).
    #[arg(long, default_value_t = 600)]
    total: usize,
    /// Explicit per-class counts, comma separated (overrides --total).
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Distance between class means along their axes.
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Isotropic standard deviation around each class mean.
    #[arg(long, default_value_t = 0.25)]
    spread: f64,
    /// Spread multiplier; higher values blur the classes together.
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Fold count.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output fold-plan CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// Experiment config file (.json or .toml). Defaults to the built-in
    /// synthetic configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the suite (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding suite outputs to re-aggregate.
    #[arg(long)]
    out: PathBuf,
    /// Significance level for the paired t-test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

struct AppError {
    message: String,
    code: u8,
}

impl AppError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_CONFIG,
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_DATA,
        }
    }
}

impl From<IngestError> for AppError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidConfig(_) | IngestError::InvalidBinCount(_) => {
                AppError::config(e.to_string())
            }
            other => AppError::data(other.to_string()),
        }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidFoldCount(_) | DataError::InvalidSpec(_) => {
                AppError::config(e.to_string())
            }
            other => AppError::data(other.to_string()),
        }
    }
}

impl From<SuiteError> for AppError {
    fn from(e: SuiteError) -> Self {
        match &e {
            SuiteError::Config(_) | SuiteError::TooFewSamples(_) | SuiteError::LengthMismatch(..) => {
                AppError::config(e.to_string())
            }
            _ => AppError::data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, AppError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Split(args) => cmd_split(args),
        Command::Calib(args) => cmd_calib(args),
        Command::Al(args) => cmd_al(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8, AppError> {
    let spec = SyntheticSpec {
        total: args.total,
        class_counts: args.counts,
        dim: args.dim,
        separation: args.separation,
        spread: args.spread,
        overlap: args.overlap,
    };
    let config: SyntheticConfig = spec
        .materialize(RngSeed(args.seed))
        .map_err(|e| AppError::config(e.to_string()))?;
    let dataset = gen_synthetic(&config)?;
    write_csv(&dataset, &args.out)?;
    println!(
        "wrote {} instances x {} features to {}",
        dataset.len(),
        dataset.dim(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_split(args: SplitArgs) -> Result<u8, AppError> {
    let dataset = load_csv(&args.data)?;
    let plan = stratified_kfold(&dataset, args.k, RngSeed(args.seed))?;
    let mut out = String::new();
    let _ = writeln!(out, "# k={}", plan.k);
    let _ = writeln!(out, "id,fold");
    for (inst, fold) in dataset.iter().zip(&plan.assignment) {
        let _ = writeln!(out, "{},{}", inst.id, fold);
    }
    std::fs::write(&args.out, out)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "wrote {}-fold plan for {} instances to {}",
        plan.k,
        dataset.len(),
        args.out.display()
    );
    Ok(0)
}

fn load_config(args: &SuiteArgs) -> Result<ExperimentConfig, AppError> {
    let mut config = match &args.config {
        None => ExperimentConfig::synthetic_default(0, PathBuf::from("out")),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::config(format!("cannot read {}: {e}", path.display())))?;
            let is_toml = path
                .extension()
                .map(|ext| ext.eq_ignore_ascii_case("toml"))
                .unwrap_or(false);
            if is_toml {
                toml::from_str(&text)
                    .map_err(|e| AppError::config(format!("{}: {e}", path.display())))?
            } else {
                serde_json::from_str(&text)
                    .map_err(|e| AppError::config(format!("{}: {e}", path.display())))?
            }
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = args.jobs {
        // A failure here means a pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    Ok(config)
}

fn cmd_calib(args: SuiteArgs) -> Result<u8, AppError> {
    let config = load_config(&args)?;
    let report = run_calibration_suite(&config)?;
    write_calib_outputs(&report, &config.out_dir)?;
    println!(
        "calibration suite: {} fold rows, {} mean rows -> {}",
        report.rows.len(),
        report.means.len(),
        config.out_dir.display()
    );
    if report.has_errors {
        let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
        eprintln!("warning: {failed} combination(s) recorded error rows");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_al(args: SuiteArgs) -> Result<u8, AppError> {
    let config = load_config(&args)?;
    let report = run_al_suite(&config)?;
    write_al_outputs(&report, &config.out_dir)?;
    println!(
        "active-learning suite: {} runs, {} experiment rows -> {}",
        report.rows.len(),
        report.quartiles.len(),
        config.out_dir.display()
    );
    if report.has_errors {
        let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
        eprintln!("warning: {failed} run(s) recorded error rows");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<u8, AppError> {
    if !(0.0 < args.alpha && args.alpha < 1.0) {
        return Err(AppError::config(format!(
            "alpha {} outside (0, 1)",
            args.alpha
        )));
    }
    let rebuilt = rebuild_reports(&args.out, args.alpha)?;
    if rebuilt.is_empty() {
        return Err(AppError::data(format!(
            "no suite outputs found under {}",
            args.out.display()
        )));
    }
    println!("rebuilt aggregate tables for: {}", rebuilt.join(", "));
    Ok(0)
}
