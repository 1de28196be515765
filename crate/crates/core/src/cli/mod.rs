//! Command-line front end.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::LoadedConfig;
use report::Output;
use run::{RunError, Stage};

#[derive(Debug, Parser)]
#[command(name = "kramers", version, about = "Metastable landscapes, Kramers rates and the reaction-diffusion limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical points and valley structure.
    Analyze(CommonArgs),
    /// Kramers constants, well weights and the valley chain.
    Rates(CommonArgs),
    /// Laplace ratios over the epsilon list.
    Asymptotics(CommonArgs),
    /// Weighted capacities and cross energies.
    Capacity(CommonArgs),
    /// Test-function solves.
    Testfn(CommonArgs),
    /// Kramers-Smoluchowski sweep against the limit system.
    Evolve(CommonArgs),
    /// Every stage plus a pass/fail summary.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Reserved; runs are deterministic.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Write SVG plots (default).
    #[arg(long, overrides_with = "no_plot")]
    pub plot: bool,
    /// Skip SVG plots.
    #[arg(long = "no-plot", overrides_with = "plot")]
    pub no_plot: bool,
}

impl Command {
    fn split(&self) -> (Stage, &CommonArgs) {
        match self {
            Command::Analyze(a) => (Stage::Analyze, a),
            Command::Rates(a) => (Stage::Rates, a),
            Command::Asymptotics(a) => (Stage::Asymptotics, a),
            Command::Capacity(a) => (Stage::Capacity, a),
            Command::Testfn(a) => (Stage::Testfn, a),
            Command::Evolve(a) => (Stage::Evolve, a),
            Command::Verify(a) => (Stage::Verify, a),
        }
    }
}

/// Parse arguments, run, print a summary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (stage, a) = cli.command.split();
    if let Some(n) = a.threads {
        if n == 0 {
            eprintln!("--threads must be positive");
            return 2;
        }
        // fails only if a pool already exists, which then keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = match LoadedConfig::read(&a.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {}", a.config.display(), RunError::Config(e));
            return 2;
        }
    };
    let out = match Output::new(&a.out, !a.no_plot) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}", RunError::Io(e));
            return 1;
        }
    };
    match run::run(stage, cfg, out) {
        Ok((summary, out)) => {
            for l in &summary.lines {
                println!("{l}");
            }
            for c in &summary.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            match &e {
                RunError::Config(_) => eprintln!("{}: {e}", a.config.display()),
                _ => eprintln!("{e}"),
            }
            e.exit_code()
        }
    }
}
