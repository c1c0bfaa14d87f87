//! `sasaki`: distances, inequality suites, constant fits and parameter sweeps on the
//! Heisenberg group.
//!
//! Exit status: 0 when everything passed, 1 when an inequality instance failed or a fit was
//! infeasible, 2 for usage or I/O errors, 3 when a numerical solve did not converge.

mod commands;
mod config;
mod report;
mod suites;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    NonConvergence(String),
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    NonConvergence,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::NonConvergence => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "sasaki", version, about = "Sub-Riemannian distance and heat-kernel inequality checks on the Heisenberg group")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Seed for every random draw; defaults to `SASAKI_SEED`, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for suite and fit reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Half the dimension of the horizontal space.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two points, each given as `x1,..,xn,y1,..,yn,z`.
    Distance {
        /// Sub-Riemannian distance.
        #[arg(long, conflicts_with = "tau", required_unless_present = "tau")]
        sr: bool,
        /// Riemannian distance with vertical scale τ.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an inequality suite and write its report.
    Verify {
        suite: Suite,
        /// Number of Harnack tuples.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Fit the constants of the Gaussian or global distance bounds.
    Fit {
        kind: FitKind,
        /// Comma-separated ε values for the Gaussian fit.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Tabulate a quantity over a parameter grid as CSV.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Cd,
    Liyau,
    Harnack,
    Gaussian,
    Global,
    Regimes,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Gaussian,
    Global,
}

#[derive(Subcommand)]
enum SweepKind {
    /// Heat kernel and its log-derivatives.
    Heat {
        /// Times: `a,b,c`, `lin:lo:hi:count` or `log:lo:hi:count`.
        #[arg(long, allow_hyphen_values = true)]
        t: String,
        /// Target point; repeatable. Defaults to ten fixed targets.
        #[arg(long, allow_hyphen_values = true)]
        y: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Li-Yau margins, or scaled Li-Yau margins when `--tau` is given.
    LiyauMargin {
        #[arg(long, allow_hyphen_values = true)]
        t: String,
        #[arg(long, allow_hyphen_values = true)]
        y: Vec<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `d / d_τ` along a dilation orbit.
    DistanceRatio {
        /// Dilation factors.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, allow_hyphen_values = true, default_value = "0,0,0")]
        a: String,
        #[arg(long, allow_hyphen_values = true, default_value = "0,0,1")]
        b: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_env()?;
    if let Some(path) = &c.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&c.sets)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(n) = c.n {
        cfg.n = n;
    }
    if cfg.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Distance { sr: _, tau, a, b, out } => commands::distance_cmd(&cfg, tau, &a, &b, out.as_deref()),
        Command::Verify { suite, count } => {
            if let Some(c) = count {
                cfg.count = c;
            }
            match suite {
                Suite::Cd => suites::verify_cd(&cfg),
                Suite::Liyau => suites::verify_liyau(&cfg),
                Suite::Harnack => suites::verify_harnack(&cfg),
                Suite::Gaussian => suites::verify_gaussian(&cfg),
                Suite::Global => {
                    cfg.require_h1("verify global")?;
                    suites::verify_global(&cfg)
                }
                Suite::Regimes => {
                    cfg.require_h1("verify regimes")?;
                    suites::verify_regimes(&cfg)
                }
            }
        }
        Command::Fit { kind, eps } => {
            if let Some(e) = eps {
                cfg.set("eps", &e)?;
            }
            match kind {
                FitKind::Gaussian => suites::fit_gaussian(&cfg),
                FitKind::Global => {
                    cfg.require_h1("fit global")?;
                    suites::fit_global_cmd(&cfg)
                }
            }
        }
        Command::Sweep { kind } => match kind {
            SweepKind::Heat { t, y, out } => commands::sweep_heat(&cfg, &t, &y, out.as_deref()),
            SweepKind::LiyauMargin { t, y, tau, out } => commands::sweep_liyau(&cfg, &t, &y, tau, out.as_deref()),
            SweepKind::DistanceRatio { lambda, a, b, tau, out } => {
                commands::sweep_distance(&cfg, &lambda, &a, &b, tau, out.as_deref())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(CliError::Usage(m)) | Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::NonConvergence(m)) => {
            eprintln!("no convergence: {m}");
            ExitCode::from(3)
        }
    }
}
