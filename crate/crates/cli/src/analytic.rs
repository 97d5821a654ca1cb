use anyhow::Result;
use clap::{Args, Subcommand};
use serde_json::json;

use powplay_core::bribery_chain::{bribery_reward_share, undercut_reward_share, TargetPartition};
use powplay_core::distraction::{
    default_deciding_grid, expected_return_delta, min_difficulty_ratio, DistractionPartition,
    SplitConvention,
};
use powplay_core::model::AttackParams;
use powplay_core::randomwalk::{abandon_threshold, fork_abandon_returns, prob_never_reach};
use powplay_core::selfish_analytic::{
    is_selfish_dominant, selfish_dominance_threshold, selfish_reward_share,
};
use powplay_core::PoolSet;

use crate::output::{num, Table};
use crate::{parse_grid, Global, Grid, PoolArgs};

#[derive(Subcommand)]
pub enum SelfishCommand {
    /// Largest residual centralization factor at which withholding pays.
    Threshold {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Whether withholding beats honest mining for a pool set.
    Dominant {
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
}

pub fn selfish(command: SelfishCommand, g: &Global) -> Result<()> {
    match command {
        SelfishCommand::Threshold { alpha, epsilon } => {
            let beta = selfish_dominance_threshold(alpha, epsilon)?;
            let mut table = Table::new(&["alpha", "epsilon", "beta_threshold"]);
            table.push(vec![num(alpha), num(epsilon), num(beta)]);
            eprintln!(
                "withholding beats honest mining when the residual factor is below {beta:.4}"
            );
            g.emit(&table)
        }
        SelfishCommand::Dominant { pools, epsilon } => {
            let set = pools.load()?;
            let verdict = is_selfish_dominant(&set, &AttackParams::new(epsilon)?)?;
            let alpha = set.adversary_share();
            let share = selfish_reward_share(alpha, verdict.residual_factor, epsilon)?;
            for w in &verdict.warnings {
                eprintln!("warning: {w}");
            }
            let mut table = Table::new(&[
                "adversary",
                "adversary_share",
                "epsilon",
                "residual_factor",
                "beta_threshold",
                "margin",
                "dominant",
                "reward_share",
            ]);
            table.push(vec![
                json!(set.pools()[set.adversary()].name),
                num(alpha),
                num(epsilon),
                num(verdict.residual_factor),
                num(verdict.threshold),
                num(verdict.margin),
                json!(verdict.dominant),
                num(share),
            ]);
            eprintln!(
                "{}: withholding {} honest mining (margin {:+.4})",
                set.pools()[set.adversary()].name,
                if verdict.dominant {
                    "beats"
                } else {
                    "does not beat"
                },
                verdict.margin
            );
            g.emit(&table)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Attack {
    Bribery,
    Undercut,
}

#[derive(Subcommand)]
pub enum AttackCommand {
    /// Long-run reward share of the attack.
    Share(ShareArgs),
}

#[derive(Args)]
pub struct ShareArgs {
    #[command(flatten)]
    pools: PoolArgs,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// `auto` targets every pool smaller than the adversary by more than
    /// 2ε; otherwise a comma-separated list of pool names.
    #[arg(long, default_value = "auto")]
    targets: String,
}

pub fn partition(set: &PoolSet, targets: &str, epsilon: f64) -> Result<TargetPartition> {
    if targets == "auto" {
        return Ok(TargetPartition::default_for(set, epsilon)?);
    }
    let names: Vec<&str> = targets
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    Ok(TargetPartition::from_names(set, &names)?)
}

pub fn attack(attack: Attack, command: AttackCommand, g: &Global) -> Result<()> {
    let AttackCommand::Share(args) = command;
    let set = args.pools.load()?;
    let alpha = set.adversary_share();
    let part = partition(&set, &args.targets, args.epsilon)?;
    let (name, share) = match attack {
        Attack::Bribery => ("bribery", bribery_reward_share(alpha, &part, args.epsilon)?),
        Attack::Undercut => (
            "undercut",
            undercut_reward_share(alpha, &part, args.epsilon)?,
        ),
    };
    let targets: Vec<&str> = part
        .targets
        .iter()
        .map(|&t| set.pools()[t].name.as_str())
        .collect();
    let mut table = Table::new(&[
        "adversary",
        "adversary_share",
        "epsilon",
        "attack",
        "targets",
        "target_share",
        "reward_share",
        "delta_vs_honest",
    ]);
    table.push(vec![
        json!(set.pools()[set.adversary()].name),
        num(alpha),
        num(args.epsilon),
        json!(name),
        json!(targets.join(";")),
        num(part.total()),
        num(share),
        num(share - alpha),
    ]);
    g.emit(&table)
}

#[derive(Subcommand)]
pub enum WalkCommand {
    /// Share above which a pool trailing by `d` keeps mining its own fork.
    Threshold {
        #[arg(long)]
        d: u32,
    },
    /// Expected returns of staying on a trailing fork and of switching.
    Returns {
        #[arg(long)]
        share: f64,
        #[arg(long)]
        d: u32,
    },
    /// Probability that a race never falls `r` blocks behind.
    NeverReach {
        #[arg(long)]
        share: f64,
        #[arg(long)]
        r: u32,
    },
}

pub fn walk(command: WalkCommand, g: &Global) -> Result<()> {
    let table = match command {
        WalkCommand::Threshold { d } => {
            let t = abandon_threshold(d)?;
            let mut table = Table::new(&["d", "threshold"]);
            table.push(vec![json!(d), num(t)]);
            table
        }
        WalkCommand::Returns { share, d } => {
            let (stay, switch) = fork_abandon_returns(share, d)?;
            let mut table = Table::new(&["share", "d", "stay", "switch", "gain"]);
            table.push(vec![
                num(share),
                json!(d),
                num(stay),
                num(switch),
                num(stay - switch),
            ]);
            table
        }
        WalkCommand::NeverReach { share, r } => {
            let p = prob_never_reach(share, r)?;
            let mut table = Table::new(&["share", "r", "probability"]);
            table.push(vec![num(share), json!(r), num(p)]);
            table
        }
    };
    g.emit(&table)
}

#[derive(Args)]
pub struct PuzzleArgs {
    /// Adversary share.
    #[arg(long)]
    alpha_a: f64,
    /// Reward per easy-puzzle solution.
    #[arg(long)]
    br2: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Deciding-pool shares as start:end:step [default: 0.01:0.30:0.01].
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
    /// Fraction of the remaining share held by pools that never mine the
    /// puzzle.
    #[arg(long, default_value_t = 0.0)]
    nc_fraction: f64,
}

impl PuzzleArgs {
    fn grid(&self) -> Vec<f64> {
        self.grid
            .clone()
            .map_or_else(default_deciding_grid, |g| g.0)
    }
}

#[derive(Subcommand)]
pub enum DistractionCommand {
    /// Return difference between the puzzle and Bitcoin across deciding
    /// pools.
    Delta {
        #[command(flatten)]
        puzzle: PuzzleArgs,
        /// Difficulty ratio between Bitcoin and the puzzle.
        #[arg(long)]
        d: f64,
    },
    /// Smallest difficulty ratio at which every deciding pool prefers the
    /// puzzle.
    MinD {
        #[command(flatten)]
        puzzle: PuzzleArgs,
    },
}

pub fn distraction(command: DistractionCommand, g: &Global) -> Result<()> {
    match command {
        DistractionCommand::Delta { puzzle, d } => {
            let mut table = Table::new(&[
                "alpha_a",
                "br2",
                "epsilon",
                "nc_fraction",
                "d_ratio",
                "alpha_i",
                "delta",
                "prefers_puzzle",
            ]);
            for ai in puzzle
                .grid()
                .into_iter()
                .filter(|ai| ai + puzzle.alpha_a <= 1.0)
            {
                let part =
                    DistractionPartition::with_split(puzzle.alpha_a, ai, puzzle.nc_fraction)?;
                let delta = expected_return_delta(&part, d, puzzle.br2, puzzle.epsilon)?;
                table.push(vec![
                    num(puzzle.alpha_a),
                    num(puzzle.br2),
                    num(puzzle.epsilon),
                    num(puzzle.nc_fraction),
                    num(d),
                    num(ai),
                    num(delta),
                    json!(delta >= puzzle.epsilon),
                ]);
            }
            g.emit(&table)
        }
        DistractionCommand::MinD { puzzle } => {
            let grid = puzzle.grid();
            let split = SplitConvention {
                nc_fraction: puzzle.nc_fraction,
            };
            let d = min_difficulty_ratio(puzzle.alpha_a, puzzle.br2, puzzle.epsilon, &grid, split)?;
            let mut table = Table::new(&[
                "alpha_a",
                "br2",
                "epsilon",
                "nc_fraction",
                "grid_start",
                "grid_end",
                "min_d_ratio",
            ]);
            table.push(vec![
                num(puzzle.alpha_a),
                num(puzzle.br2),
                num(puzzle.epsilon),
                num(puzzle.nc_fraction),
                num(grid[0]),
                num(*grid.last().unwrap()),
                num(d),
            ]);
            g.emit(&table)
        }
    }
}
