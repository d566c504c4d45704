//! `lagrindex` command-line front end.
//!
//! Exit codes: 0 success, 1 solver error, 2 configuration error, 3 failed
//! certification or self-test.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "lagrindex", version, about = "Morse index, focal points and bifurcation scans for Lagrangian problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for CSV/SVG output (stdout when omitted)
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Number of finite elements on the time interval
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Number of λ samples in a scan
    #[arg(long = "lambda-grid", value_name = "K")]
    lambda_grid: Option<usize>,
    /// Main tolerance of the subcommand
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Refine: double the time grid until stable (index) or insert λ midpoints (scan)
    #[arg(long)]
    refine: bool,
    /// Also write SVG plots (needs --out)
    #[arg(long)]
    svg: bool,
    /// Seed for randomized checks
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            grid: self.grid,
            lambda_grid: self.lambda_grid,
            tol: self.tol,
            refine: self.refine,
            svg: self.svg,
            seed: self.seed,
        }
    }

    fn load(&self) -> anyhow::Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Err(config::config_error("--config is required for this subcommand")),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Euler-Lagrange boundary problem and write the trajectory
    ElSolve(Common),
    /// Morse index and nullity by finite elements and by focal points
    Index(Common),
    /// Focal instants along the interval
    Focal(Common),
    /// Jacobi fields spanning the kernel
    Kernel(Common),
    /// Index scan over λ with candidate location and certificates
    Scan(Common),
    /// Index-jump formula check on random operator families
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Run the randomized self-test
        #[arg(long)]
        selftest: bool,
        /// Number of random families
        #[arg(long, value_name = "T", default_value_t = 100)]
        trials: usize,
    },
    /// Built-in demonstrations
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Forced pendulum around the rest position
    Pendulum(Common),
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::ElSolve(c) => commands::el_solve(c.load()?, &c.overrides()),
        Command::Index(c) => commands::index(c.load()?, &c.overrides()),
        Command::Focal(c) => commands::focal(c.load()?, &c.overrides()),
        Command::Kernel(c) => commands::kernel(c.load()?, &c.overrides()),
        Command::Scan(c) => commands::scan(c.load()?, &c.overrides()),
        Command::Perturb { common, selftest, trials } => {
            let seed = match (&common.config, common.seed) {
                (_, Some(s)) => s,
                (Some(_), None) => common.load()?.seed,
                (None, None) => 0,
            };
            commands::perturb(selftest, trials, seed, &common.overrides())
        }
        Command::Demo { which: Demo::Pendulum(c) } => commands::demo_pendulum(&c.overrides()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
