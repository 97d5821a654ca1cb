mod analytic;
mod output;
mod reproduce;
mod simulate;
mod solve;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use output::{Format, Table};
use powplay_core::sim::DEFAULT_SEED;
use powplay_core::PoolSet;

/// Analytics, an optimal-race solver and a simulator for mining-power
/// destruction attacks.
#[derive(Parser)]
#[command(name = "powplay", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also draw a line chart to this SVG file, where the command has one.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    /// Seed for randomized commands [default: 0xC0FFEE].
    #[arg(long, global = true, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "POWPLAY_THREADS")]
    pub threads: Option<usize>,
    /// Output format; most commands default to csv.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn emit(&self, table: &Table) -> Result<()> {
        table.write(self.format.unwrap_or(Format::Csv), self.out.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Regenerate a published table or figure.
    Reproduce {
        #[command(subcommand)]
        experiment: reproduce::Experiment,
    },
    /// Closed-form analysis of one/two-block withholding.
    Selfish {
        #[command(subcommand)]
        command: analytic::SelfishCommand,
    },
    /// Closed-form reward share of the bribery attack.
    Bribery {
        #[command(subcommand)]
        command: analytic::AttackCommand,
    },
    /// Closed-form reward share of the undercutting attack.
    Undercut {
        #[command(subcommand)]
        command: analytic::AttackCommand,
    },
    /// Optimal race strategy against petty-compliant pools.
    Mdp {
        #[command(subcommand)]
        command: solve::MdpCommand,
    },
    /// Seeded Monte Carlo simulation with difficulty adjustment.
    Sim {
        #[command(subcommand)]
        command: simulate::SimCommand,
    },
    /// Fork-race random-walk quantities.
    Walk {
        #[command(subcommand)]
        command: analytic::WalkCommand,
    },
    /// Hash-power distraction with an easier side puzzle.
    Distraction {
        #[command(subcommand)]
        command: analytic::DistractionCommand,
    },
}

/// A pool file and the adversary within it.
#[derive(Args, Clone, Debug)]
pub struct PoolArgs {
    /// Pool file (JSON); defaults to the bundled hash-rate table.
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Adversary name; defaults to the adversary named in the file.
    #[arg(long)]
    pub adversary: Option<String>,
}

impl PoolArgs {
    pub fn load_or(&self, default: fn() -> PoolSet) -> Result<PoolSet> {
        let set = match &self.pools {
            Some(path) => load_pools(path)?,
            None => default(),
        };
        match &self.adversary {
            Some(name) => Ok(set.with_adversary_named(name)?),
            None => Ok(set),
        }
    }

    pub fn load(&self) -> Result<PoolSet> {
        self.load_or(PoolSet::table1)
    }
}

fn load_pools(path: &Path) -> Result<PoolSet> {
    PoolSet::load(path).with_context(|| format!("loading pool file {}", path.display()))
}

fn parse_seed(text: &str) -> Result<u64, String> {
    let parsed = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => text.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {text:?}: {e}"))
}

/// Inclusive share grid given on the command line as `start:end:step`.
#[derive(Clone, Debug)]
pub struct Grid(pub Vec<f64>);

/// Parses `start:end:step` into an inclusive grid.
pub fn parse_grid(text: &str) -> Result<Grid, String> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("invalid grid {text:?}: {e}"))?;
    let [start, end, step] = parts[..] else {
        return Err(format!("grid {text:?} must look like start:end:step"));
    };
    powplay_core::distraction::share_grid(start, end, step)
        .map(Grid)
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Reproduce { experiment } => reproduce::run(experiment, g),
        Command::Selfish { command } => analytic::selfish(command, g),
        Command::Bribery { command } => analytic::attack(analytic::Attack::Bribery, command, g),
        Command::Undercut { command } => analytic::attack(analytic::Attack::Undercut, command, g),
        Command::Mdp { command } => solve::run(command, g),
        Command::Sim { command } => simulate::run(command, g),
        Command::Walk { command } => analytic::walk(command, g),
        Command::Distraction { command } => analytic::distraction(command, g),
    }
}

/// 1 for invalid input, 2 when a solver fails to converge or outgrows its
/// ceiling, 3 for I/O failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    use powplay_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Convergence { .. } | E::Capacity { .. } => 2,
                E::Io(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<csv::Error>() {
            return if e.is_io_error() { 3 } else { 1 };
        }
    }
    1
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads(cli.global.threads).and_then(|()| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_accept_hex() {
        assert_eq!(parse_seed("0xC0FFEE").unwrap(), 0xC0FFEE);
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert!(parse_seed("0xZZ").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap().0.len(), 3);
        assert!(parse_grid("0.1:0.3").is_err());
        assert!(parse_grid("0.3:0.1:0.1").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        use powplay_core::Error as E;
        let code = |e: E| exit_code(&anyhow::Error::new(e).context("outer"));
        assert_eq!(code(E::Validation("x".into())), 1);
        assert_eq!(
            code(E::Convergence {
                what: "x".into(),
                iterations: 1,
                residual: 0.0
            }),
            2
        );
        assert_eq!(code(E::Io("x".into())), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
