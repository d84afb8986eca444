use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drmdp::io::{InstanceFile, LoadError, LoadedInstance};
use drmdp::oracle::OracleConfig;
use drmdp::report::{self, Part, Report};
use drmdp::{fixtures, Error};


const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  validation failure: unreadable or malformed file, invalid model, failed golden check
  3  numerical failure: a linear program broke down or two solution forms disagree
  4  enumeration cap exceeded";

/// Distributionally robust finite-horizon MDPs: solve, diagnose, and compare
/// against brute-force static oracles.
#[derive(Parser)]
#[command(name = "drmdp", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the game formulation and report values, policies and verdicts.
    #[command(after_help = EXIT_CODES)]
    Solve {
        /// Instance file, or the name of a bundled example.
        path: PathBuf,
        #[command(flatten)]
        which: Which,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Rectangularity, worst-case and convexity checks; prints no solution.
    #[command(after_help = EXIT_CODES)]
    Check {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare the game formulation with brute-force static formulations.
    #[command(after_help = EXIT_CODES)]
    Oracle {
        path: PathBuf,
        #[command(flatten)]
        resolution: Resolution,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Bundled examples with golden outputs.
    #[command(after_help = EXIT_CODES)]
    Examples {
        #[command(subcommand)]
        action: ExamplesAction,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct Which {
    /// Only the min-max (controller first) recursion.
    #[arg(long)]
    primal: bool,
    /// Only the max-min (nature first) recursion.
    #[arg(long)]
    dual: bool,
    /// Both recursions plus duality diagnostics (default).
    #[arg(long)]
    both: bool,
}

#[derive(Args)]
struct Resolution {
    /// Denominator of the controller policy grid.
    #[arg(long)]
    policy_grid: Option<usize>,
    /// Denominator of the convex-weight grid used to sample nature's laws.
    #[arg(long)]
    kernel_grid: Option<usize>,
    /// Largest number of combinations the oracles may enumerate.
    #[arg(long)]
    max_enum: Option<u64>,
    /// Allowed |static primal - game primal|; defaults to the grid bound plus 1e-6.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum ExamplesAction {
    /// Print the bundled example names.
    List,
    /// Run one example, or `all`, and assert its golden outputs.
    Run {
        name: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Invalid(e) => e.into(),
            other => Failure {
                code: 2,
                message: other.to_string(),
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_cap() {
            4
        } else if e.is_numerical() {
            3
        } else {
            2
        };
        let listed = |head: &str, v: &[drmdp::Violation]| {
            let mut m = head.to_string();
            for x in v {
                m.push_str(&format!("\n  {x}"));
            }
            m
        };
        let message = match &e {
            Error::InvalidInstance(v) => listed("invalid instance:", v),
            Error::InvalidModel(v) => listed("invalid ambiguity model:", v),
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

/// Reads `path`; a missing file whose stem names a bundled example loads that example.
fn load(path: &Path) -> Result<LoadedInstance, Failure> {
    if !path.exists() {
        if let Some(text) = path.file_stem().and_then(|s| s.to_str()).and_then(fixtures::source) {
            return Ok(InstanceFile::parse(text)?.load()?);
        }
    }
    Ok(drmdp::io::load_instance_file(path)?)
}

fn oracle_config(file: &OracleConfig, r: &Resolution) -> Result<OracleConfig, Failure> {
    let cfg = OracleConfig {
        policy_grid: r.policy_grid.unwrap_or(file.policy_grid),
        kernel_grid: r.kernel_grid.unwrap_or(file.kernel_grid),
        max_enumeration: r.max_enum.unwrap_or(file.max_enumeration),
    };
    cfg.validate()?;
    if r.tol.is_some_and(|t| !(t >= 0.0)) {
        return Err(Failure {
            code: 2,
            message: "--tol must be a nonnegative number".into(),
        });
    }
    Ok(cfg)
}

/// Write errors (a closed pipe, say) are ignored.
fn emit(r: &Report, format: Format) {
    let mut out = std::io::stdout().lock();
    let _ = match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&r.json).expect("reports serialize")),
        Format::Table => r.lines.iter().try_for_each(|line| writeln!(out, "{line}")),
    };
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Solve { path, which, format } => {
            let part = if which.primal {
                Part::Primal
            } else if which.dual {
                Part::Dual
            } else {
                Part::Both
            };
            let l = load(&path)?;
            emit(&report::solve(&l, part)?, format);
            Ok(0)
        }
        Command::Check { path, format } => {
            let l = load(&path)?;
            emit(&report::check(&l)?, format);
            Ok(0)
        }
        Command::Oracle {
            path,
            resolution,
            format,
        } => {
            let l = load(&path)?;
            let cfg = oracle_config(&l.oracle, &resolution)?;
            let r = report::oracle(&l, &cfg, resolution.tol)?;
            emit(&r, format);
            Ok(0)
        }
        Command::Examples { action } => match action {
            ExamplesAction::List => {
                let mut out = std::io::stdout().lock();
                for n in fixtures::names() {
                    let _ = writeln!(out, "{n}");
                }
                Ok(0)
            }
            ExamplesAction::Run { name, format } => {
                let names: Vec<String> = if name == "all" {
                    fixtures::names().iter().map(|s| s.to_string()).collect()
                } else {
                    vec![name]
                };
                let mut runs = Vec::new();
                for n in &names {
                    runs.push(fixtures::run(n)?);
                }
                let r = report::examples(&runs);
                emit(&r, format);
                Ok(if runs.iter().all(|r| r.passed()) { 0 } else { 2 })
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
