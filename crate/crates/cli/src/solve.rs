use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;

use powplay_core::mdp::{optimal_reward_share, MdpOptions, SolverOptions};
use powplay_core::model::AttackParams;
use powplay_core::PoolSet;

use crate::output::{self, num, Format, Table};
use crate::{Global, PoolArgs};

#[derive(Subcommand)]
pub enum MdpCommand {
    /// Solve for the optimal long-run reward share.
    Solve(SolveArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    /// Pool file; defaults to the bundled nine-pool aggregate.
    #[command(flatten)]
    pools: PoolArgs,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Highest bribe level offered on a match.
    #[arg(long, default_value_t = 1)]
    max_bribe: u32,
    /// Longest fork either side may build.
    #[arg(long, default_value_t = 8)]
    fork_cap: u32,
    /// Width of the final bracket on the reward share.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Only allow matching right after another pool found a block.
    #[arg(long)]
    match_needs_pool_latest: bool,
    /// Write the optimal action of every state to this CSV file.
    #[arg(long)]
    policy: Option<PathBuf>,
}

pub fn run(command: MdpCommand, g: &Global) -> Result<()> {
    let MdpCommand::Solve(args) = command;
    let set = args.pools.load_or(PoolSet::realworld)?;
    let params = AttackParams::new(args.epsilon)?.with_max_bribe(args.max_bribe);
    let options = MdpOptions {
        match_needs_pool_latest: args.match_needs_pool_latest,
        ..MdpOptions::default().with_fork_cap(args.fork_cap)
    };
    let solver = SolverOptions {
        tol: args.tol,
        ..SolverOptions::default()
    };
    let (model, result) = optimal_reward_share(&set, &params, &options, &solver)?;

    if let Some(path) = &args.policy {
        let mut table = Table::new(&[
            "fork_blocks",
            "fork_len",
            "adversary_len",
            "latest",
            "match_active",
            "bribe_level",
            "action",
        ]);
        for (state, action) in result.policy_entries(&model) {
            let blocks: Vec<String> = state.fork_blocks.iter().map(u32::to_string).collect();
            table.push(vec![
                json!(blocks.join(";")),
                json!(state.fork_len),
                json!(state.adversary_len),
                json!(format!("{:?}", state.latest).to_lowercase()),
                json!(state.match_active),
                json!(state.bribe_level),
                json!(action.to_string()),
            ]);
        }
        table
            .write(Format::Csv, Some(path))
            .with_context(|| format!("writing policy to {}", path.display()))?;
    }

    let adversary = &set.pools()[set.adversary()].name;
    let fields = [
        ("adversary", json!(adversary)),
        ("adversary_share", num(set.adversary_share())),
        ("epsilon", num(args.epsilon)),
        ("max_bribe", json!(args.max_bribe)),
        ("fork_cap", json!(args.fork_cap)),
        ("tolerance", num(args.tol)),
        ("reward_share", num(result.reward_share)),
        ("bracket_lo", num(result.bracket.0)),
        ("bracket_hi", num(result.bracket.1)),
        ("iterations", json!(result.iterations)),
        ("state_count", json!(result.state_count)),
    ];
    match g.format.unwrap_or(Format::Json) {
        Format::Json => {
            let map: serde_json::Map<_, _> = fields
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            output::write_json(&map.into(), g.out.as_deref())
        }
        Format::Csv => {
            let names: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
            let mut table = Table::new(&names);
            table.push(fields.into_iter().map(|(_, v)| v).collect());
            g.emit(&table)
        }
    }
}
