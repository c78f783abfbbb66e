//! Command-line harness for the modnls experiments.
//!
//! Each subcommand resolves its parameters from an optional JSON config
//! overlaid with command-line flags, writes CSV output and a
//! `manifest.json` into the output directory, and ends with one status line
//! on standard error:
//!
//! * `ok` with exit code 0,
//! * `usage-error: <message>` with exit code 1,
//! * `<failure> key=value...` (for example `diverged t=0.42`) with exit code 2.

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod commands;
pub mod io;
pub mod params;

pub use commands::{bump_field, gn_corpus, Bumps};
pub use io::{CliError, RunManifest, MANIFEST_NAME};

use io::{load_config, merge, usage, Result, Run};
use params::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "modnls", version, about = "Experiments on Schrödinger equations with modulated dispersion")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Global seed, expanded into per-component seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file when it has an extension.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config or a previous manifest; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved config to standard error.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an fBm or linear modulation path as `t,w` CSV.
    GenPath(GenPathArgs),
    /// Estimate the irregularity norm of a path file.
    Irregularity(IrregularityArgs),
    /// Euler convergence rate on the scalar modulated problem.
    EulerRate(EulerRateArgs),
    /// Solve the modulated equation on the torus.
    Solve(SolveArgs),
    /// Distances of Galerkin-projected solutions to the reference cutoff.
    Galerkin(SolveArgs),
    /// Trajectory sensitivity under mollified modulation.
    ModContinuity(SolveArgs),
    /// Time the cubic kernel and fit its Hölder constant.
    XBench(XBenchArgs),
    /// Strichartz ratios of the Duhamel term on the line.
    Strichartz(StrichartzArgs),
    /// Mild solution of the power-type equation on the line.
    NlsLine(NlsLineArgs),
    /// Gagliardo–Nirenberg ratios over a random corpus.
    Gn(GnArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenPath(_) => "gen-path",
            Command::Irregularity(_) => "irregularity",
            Command::EulerRate(_) => "euler-rate",
            Command::Solve(_) => "solve",
            Command::Galerkin(_) => "galerkin",
            Command::ModContinuity(_) => "mod-continuity",
            Command::XBench(_) => "x-bench",
            Command::Strichartz(_) => "strichartz",
            Command::NlsLine(_) => "nls-line",
            Command::Gn(_) => "gn",
        }
    }
}

/// Run the harness on `argv` (program name first) and return the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            if code == EXIT_OK {
                eprintln!("ok");
            } else {
                eprintln!("usage-error: {}", first_line(&e.to_string()));
            }
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(usage("--threads must be >= 1")),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Io(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => {
            eprintln!("ok");
            EXIT_OK
        }
        Err(CliError::Numeric(status)) => {
            eprintln!("{status}");
            EXIT_NUMERIC
        }
        Err(e) => {
            eprintln!("usage-error: {}", first_line(&e.to_string()));
            EXIT_USAGE
        }
    }
}

fn first_line(s: &str) -> String {
    let line = s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    line.strip_prefix("error: ").unwrap_or(line).to_string()
}

fn dispatch(cli: &Cli) -> Result<()> {
    let name = cli.command.name();
    match &cli.command {
        Command::GenPath(a) => execute(cli, name, a, commands::gen_path),
        Command::Irregularity(a) => execute(cli, name, a, commands::irregularity),
        Command::EulerRate(a) => execute(cli, name, a, commands::euler_rate),
        Command::Solve(a) => execute(cli, name, a, commands::solve),
        Command::Galerkin(a) => execute(cli, name, a, commands::galerkin),
        Command::ModContinuity(a) => execute(cli, name, a, commands::mod_continuity),
        Command::XBench(a) => execute(cli, name, a, commands::x_bench),
        Command::Strichartz(a) => execute(cli, name, a, commands::strichartz),
        Command::NlsLine(a) => execute(cli, name, a, commands::nls_line),
        Command::Gn(a) => execute(cli, name, a, commands::gn),
    }
}

fn execute<F, R>(cli: &Cli, name: &str, flags: &F, body: fn(&R, &mut Run) -> Result<()>) -> Result<()>
where
    F: Serialize + DeserializeOwned + Resolve<Output = R>,
    R: Serialize,
{
    let base = cli.config.as_deref().map(|p| load_config(p, name)).transpose()?;
    let mut overlay = serde_json::to_value(flags)?;
    if let (Some(seed), Some(map)) = (cli.seed, overlay.as_object_mut()) {
        map.insert("seed".into(), seed.into());
    }
    let merged: F = serde_json::from_value(merge(base, overlay)).map_err(|e| usage(format!("config: {e}")))?;
    let resolved = merged.resolve();
    if cli.verbose > 0 {
        eprintln!("{name}: {}", serde_json::to_string(&resolved)?);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("modnls-out").join(name));
    let mut run = Run::new(&out)?;
    if let Some(p) = &cli.config {
        run.record_input(p)?;
    }
    let outcome = body(&resolved, &mut run);
    let status = match &outcome {
        Ok(()) => "ok".to_string(),
        Err(e) => first_line(&e.to_string()),
    };
    run.finish(name, &resolved, cli.threads, &status)?;
    outcome
}
