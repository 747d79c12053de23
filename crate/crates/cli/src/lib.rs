//! `mixtype` command-line driver.
//!
//! Each subcommand runs one certificate or solver pipeline, writes CSV
//! artifacts plus `summary.txt` and `run.manifest` into the output directory,
//! and maps the result to an exit code: 0 all checks pass, 1 a certificate
//! fails, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
mod output;

pub use config::{load_config, parse_config, ConfigError, Overrides, RhsSpec, RunConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mixtype", version, about = "Certificates and solvers for a closed mixed-type boundary value problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Pointwise coefficient conditions.
    Check,
    /// Interior and boundary multiplier form bounds.
    Multiplier,
    /// One linear solve.
    Solve,
    /// Manufactured-solution convergence study over the grid list.
    Mms,
    /// Energy certificate over seeded adjoint samples.
    Energy,
    /// Auxiliary-operator iteration over seeded right-hand sides.
    Aux,
    /// Prescribed Gaussian curvature iteration.
    Ma,
    /// Darboux iteration for the flat metric.
    Darboux,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Multiplier => "multiplier",
            Command::Solve => "solve",
            Command::Mms => "mms",
            Command::Energy => "energy",
            Command::Aux => "aux",
            Command::Ma => "ma",
            Command::Darboux => "darboux",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
struct CommonArgs {
    /// Config file (`[problem]`, `[grid]`, `[run]`, `[nonlinear]` sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// tricomi | infinite_order | wedge | chaplygin | tilted | csv:<path>
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Sobolev order m of the estimate.
    #[arg(long, global = true, allow_negative_numbers = true)]
    m: Option<i64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    psi: Option<f64>,
    /// manufactured | smooth | csv:<path>
    #[arg(long, global = true)]
    rhs: Option<String>,
    /// Solve even when the coefficient conditions fail.
    #[arg(long, global = true)]
    no_enforce: bool,
    #[arg(long, global = true)]
    upwind: bool,
    /// Intervals per direction.
    #[arg(long, short, global = true, allow_negative_numbers = true)]
    n: Option<i64>,
    /// Comma-separated refinement levels for `mms`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    grids: Option<Vec<i64>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    seed: Option<i64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    samples: Option<i64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    tol: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    max_iter: Option<i64>,
    /// K as a field CSV for `ma` / `darboux` instead of the manufactured case.
    #[arg(long, global = true)]
    curvature: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            eps: self.eps,
            alpha: self.alpha,
            lambda: self.lambda,
            m: self.m,
            psi: self.psi,
            rhs: self.rhs.clone(),
            no_enforce: self.no_enforce,
            upwind: self.upwind,
            n: self.n,
            grids: self.grids.clone(),
            seed: self.seed,
            samples: self.samples,
            output: self.output.clone(),
            rho: self.rho,
            alpha0: self.alpha0,
            theta: self.theta,
            tol: self.tol,
            max_iter: self.max_iter,
            curvature: self.curvature.clone(),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let flags = cli.opts.overrides();
    let cfg = match &cli.opts.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
            .and_then(|text| parse_config(&text, &path.display().to_string(), &flags)),
        None => parse_config("", "<flags>", &flags),
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    commands::execute(cli.command, &cfg, cli.opts.config.as_deref())
}
