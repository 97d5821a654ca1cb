use anyhow::Result;
use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use powplay_core::bribery_chain::{bribery_reward_share, undercut_reward_share, TargetPartition};
use powplay_core::distraction::{
    distraction_outcome, expected_return_delta, min_difficulty_ratio, share_grid,
    DistractionPartition, SplitConvention,
};
use powplay_core::mdp::{optimal_reward_share, MdpOptions, SolverOptions, MAX_OTHER_POOLS};
use powplay_core::model::AttackParams;
use powplay_core::reference::{self, ReferenceCase, REWARD_SHARE_TOLERANCE};
use powplay_core::selfish_analytic::selfish_reward_share;
use powplay_core::{Error, PoolSet};

use crate::output::{num, opt, Table};
use crate::simulate::{emit_trajectory, LagAttack, LagSettings};
use crate::svg::{Chart, Series};
use crate::{parse_grid, Global, Grid, PoolArgs};

#[derive(Subcommand)]
pub enum Experiment {
    /// Optimal reward shares, adversary 0.4 and ε = 0.1.
    Table2(SolverArgs),
    /// Optimal reward shares, adversary 0.3 and ε = 0, by residual
    /// centralization.
    Table3(SolverArgs),
    /// Optimal reward shares of five real-world pools.
    Table4(SolverArgs),
    /// Bribery, undercutting and optimal racing per adversary.
    Fig3(Fig3Args),
    /// Profit lag of withholding.
    Fig4(LagFigArgs),
    /// Profit lag of bribery for every pool as the adversary.
    Fig5(LagFigArgs),
    /// Distraction: deciding-pool returns, or adversarial gain.
    Fig6(Fig6Args),
}

#[derive(Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 8)]
    fork_cap: u32,
    #[arg(long, default_value_t = 1)]
    max_bribe: u32,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

impl SolverArgs {
    fn solve(&self, pools: &PoolSet, epsilon: f64) -> Result<(f64, usize, usize)> {
        let params = AttackParams::new(epsilon)?.with_max_bribe(self.max_bribe);
        let solver = SolverOptions {
            tol: self.tol,
            ..SolverOptions::default()
        };
        let (_, r) = optimal_reward_share(
            pools,
            &params,
            &MdpOptions::default().with_fork_cap(self.fork_cap),
            &solver,
        )?;
        Ok((r.reward_share, r.state_count, r.iterations))
    }
}

fn reference_table(cases: Vec<ReferenceCase>, args: &SolverArgs, g: &Global) -> Result<()> {
    // Rows solve in parallel; collect keeps them in case order.
    let solved: Vec<(f64, usize, usize)> = cases
        .par_iter()
        .map(|c| args.solve(&c.pools, c.epsilon))
        .collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "label",
        "adversary_share",
        "epsilon",
        "fork_cap",
        "max_bribe",
        "tolerance",
        "seed",
        "reward_share",
        "reference",
        "within_tolerance",
        "state_count",
        "iterations",
    ]);
    for (c, (share, states, iterations)) in cases.iter().zip(solved) {
        table.push(vec![
            json!(c.label),
            num(c.pools.adversary_share()),
            num(c.epsilon),
            json!(args.fork_cap),
            json!(args.max_bribe),
            num(args.tol),
            json!(g.seed()),
            num(share),
            num(c.expected_reward_share),
            json!((share - c.expected_reward_share).abs() <= REWARD_SHARE_TOLERANCE),
            json!(states),
            json!(iterations),
        ]);
    }
    g.emit(&table)
}

#[derive(Args)]
pub struct Fig3Args {
    /// Pool file; defaults to the bundled nine-pool aggregate.
    #[arg(long)]
    pools: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

fn fig3(args: Fig3Args, g: &Global) -> Result<()> {
    let base = PoolArgs {
        pools: args.pools.clone(),
        adversary: None,
    }
    .load_or(PoolSet::realworld)?;
    let eps = args.epsilon;
    let rows: Vec<Vec<serde_json::Value>> = (0..base.len())
        .into_par_iter()
        .filter(|&i| !base.pools()[i].honest)
        .map(|i| -> Result<_> {
            let pools = base.with_adversary(i)?;
            let alpha = pools.adversary_share();
            let part = TargetPartition::default_for(&pools, eps).ok();
            let bribery = part
                .as_ref()
                .and_then(|p| bribery_reward_share(alpha, p, eps).ok());
            let undercut = part
                .as_ref()
                .and_then(|p| undercut_reward_share(alpha, p, eps).ok());
            let beta = pools.residual_centralization_factor(i)?;
            let selfish = selfish_reward_share(alpha, beta, eps).ok();
            let mdp = if pools.len() - 1 <= MAX_OTHER_POOLS {
                match args.solver.solve(&pools, eps) {
                    Ok((share, _, _)) => Some(share),
                    Err(e)
                        if e.downcast_ref::<Error>()
                            .is_some_and(|e| matches!(e, Error::Capacity { .. })) =>
                    {
                        None
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            Ok(vec![
                json!(pools.pools()[i].name),
                num(alpha),
                num(eps),
                json!(args.solver.fork_cap),
                json!(args.solver.max_bribe),
                num(args.solver.tol),
                opt(bribery),
                opt(undercut),
                opt(selfish),
                opt(mdp),
            ])
        })
        .collect::<Result<_>>()?;
    let mut rows = rows;
    rows.sort_by(|a, b| a[1].as_f64().unwrap().total_cmp(&b[1].as_f64().unwrap()));
    let columns = [
        "adversary",
        "adversary_share",
        "epsilon",
        "fork_cap",
        "max_bribe",
        "tolerance",
        "bribery",
        "undercut",
        "pi_selfish",
        "mdp_optimal",
    ];
    let mut table = Table::new(&columns);
    for row in &rows {
        table.push(row.clone());
    }
    if let Some(path) = &g.svg {
        let mut series: Vec<Series> = (6..10)
            .map(|k| Series {
                name: columns[k].to_string(),
                points: rows
                    .iter()
                    .filter_map(|r| Some((r[1].as_f64()?, r[k].as_f64()?)))
                    .collect(),
            })
            .collect();
        series.push(Series {
            name: "honest".into(),
            points: rows
                .iter()
                .map(|r| (r[1].as_f64().unwrap(), r[1].as_f64().unwrap()))
                .collect(),
        });
        Chart {
            title: "Reward share by adversary".into(),
            x_label: "adversary share".into(),
            y_label: "reward share".into(),
            series,
        }
        .save(path)?;
    }
    g.emit(&table)
}

#[derive(Args)]
pub struct LagFigArgs {
    #[command(flatten)]
    pools: PoolArgs,
    #[command(flatten)]
    settings: LagSettings,
}

fn fig5(args: LagFigArgs, g: &Global) -> Result<()> {
    let base = args.pools.load()?;
    let s = &args.settings;
    let runs: Vec<_> = (0..base.len())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let pools = base.with_adversary(i)?;
            let part = TargetPartition::default_for(&pools, s.epsilon)?;
            let t = s.trajectory(pools.clone(), LagAttack::Bribery.strategy(), g.seed())?;
            Ok((pools, part.targets.len(), t))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "adversary",
        "adversary_share",
        "epsilon",
        "epochs",
        "epoch_length",
        "method",
        "seed",
        "targets",
        "first_epoch_max",
        "first_epoch_min",
        "profit_lag",
        "profit_lag_epochs",
    ]);
    for (pools, targets, t) in &runs {
        table.push(vec![
            json!(pools.pools()[pools.adversary()].name),
            num(pools.adversary_share()),
            num(s.epsilon),
            json!(s.epochs),
            json!(s.epoch_length),
            json!(s.method_name()),
            json!(g.seed()),
            json!(targets),
            num(t.first_epoch_max),
            num(t.first_epoch_min),
            opt(t.profit_lag),
            opt(t.profit_lag.map(|l| l / s.epoch_length as f64)),
        ]);
    }
    if let Some(path) = &g.svg {
        Chart {
            title: "Bribery: revenue advantage over honest mining".into(),
            x_label: "time (target block intervals)".into(),
            y_label: "cumulative advantage (block rewards)".into(),
            series: runs
                .iter()
                .filter(|(_, targets, _)| *targets > 0)
                .map(|(pools, _, t)| Series {
                    name: pools.pools()[pools.adversary()].name.clone(),
                    points: t.points.clone(),
                })
                .collect(),
        }
        .save(path)?;
    }
    g.emit(&table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Panel {
    /// Return difference of the deciding pool against its share.
    A,
    /// Adversarial reward share against the largest pool's share.
    B,
}

#[derive(Args)]
pub struct Fig6Args {
    #[arg(long, value_enum, default_value_t = Panel::A)]
    panel: Panel,
    /// Adversary share [default: 0.4 for panel a, 0.3 for panel b].
    #[arg(long)]
    alpha_a: Option<f64>,
    /// Puzzle reward [default: 0.04 for panel a, 0.03 for panel b].
    #[arg(long)]
    br2: Option<f64>,
    /// [default: 0.02 for panel a, 0 for panel b]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Difficulty ratios drawn in panel a.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    d: Vec<f64>,
    /// Share grid as start:end:step [default: 0.01:0.30:0.01].
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
    #[arg(long, default_value_t = 0.0)]
    nc_fraction: f64,
}

fn fig6(args: Fig6Args, g: &Global) -> Result<()> {
    let grid = args
        .grid
        .clone()
        .map_or_else(powplay_core::distraction::default_deciding_grid, |g| g.0);
    match args.panel {
        Panel::A => {
            let (alpha_a, br2, eps) = (
                args.alpha_a.unwrap_or(0.4),
                args.br2.unwrap_or(0.04),
                args.epsilon.unwrap_or(0.02),
            );
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
            let mut series = Vec::new();
            for &d in &args.d {
                let mut points = Vec::new();
                for &ai in grid.iter().filter(|&&ai| ai + alpha_a <= 1.0) {
                    let part = DistractionPartition::with_split(alpha_a, ai, args.nc_fraction)?;
                    let delta = expected_return_delta(&part, d, br2, eps)?;
                    points.push((ai, delta));
                    table.push(vec![
                        num(alpha_a),
                        num(br2),
                        num(eps),
                        num(args.nc_fraction),
                        num(d),
                        num(ai),
                        num(delta),
                        json!(delta >= eps),
                    ]);
                }
                series.push(Series {
                    name: format!("d = {d}"),
                    points,
                });
            }
            if let Some(path) = &g.svg {
                series.push(Series {
                    name: "epsilon".into(),
                    points: vec![(grid[0], eps), (*grid.last().unwrap(), eps)],
                });
                Chart {
                    title: "Deciding pool: puzzle minus Bitcoin return".into(),
                    x_label: "deciding pool share".into(),
                    y_label: "normalized return difference".into(),
                    series,
                }
                .save(path)?;
            }
            g.emit(&table)
        }
        Panel::B => {
            let (alpha_a, br2, eps) = (
                args.alpha_a.unwrap_or(0.3),
                args.br2.unwrap_or(0.03),
                args.epsilon.unwrap_or(0.0),
            );
            let split = SplitConvention {
                nc_fraction: args.nc_fraction,
            };
            let mut table = Table::new(&[
                "alpha_a",
                "br2",
                "epsilon",
                "nc_fraction",
                "largest_share",
                "d_ratio",
                "solutions_per_block",
                "reward_share",
                "uplift_percent",
            ]);
            let mut points = Vec::new();
            for &largest in grid.iter().filter(|&&s| s + alpha_a < 1.0) {
                // Every deciding pool up to the largest must prefer the puzzle.
                let deciders =
                    share_grid(grid[0], largest, grid.get(1).map_or(0.01, |x| x - grid[0]))?;
                let row = match min_difficulty_ratio(alpha_a, br2, eps, &deciders, split) {
                    Ok(d) => {
                        let part = DistractionPartition::all_compliant(alpha_a, largest)?;
                        let out = distraction_outcome(&part, d, br2)?;
                        points.push((largest, out.reward_share));
                        (
                            num(d),
                            num(out.solutions_per_block),
                            num(out.reward_share),
                            num(out.uplift_percent),
                        )
                    }
                    Err(Error::Infeasible(_)) => {
                        (json!(null), json!(null), json!(null), json!(null))
                    }
                    Err(e) => return Err(e.into()),
                };
                table.push(vec![
                    num(alpha_a),
                    num(br2),
                    num(eps),
                    num(args.nc_fraction),
                    num(largest),
                    row.0,
                    row.1,
                    row.2,
                    row.3,
                ]);
            }
            if let Some(path) = &g.svg {
                Chart {
                    title: "Distraction: adversarial reward share".into(),
                    x_label: "largest non-adversarial pool share".into(),
                    y_label: "reward share".into(),
                    series: vec![
                        Series {
                            name: "distraction".into(),
                            points: points.clone(),
                        },
                        Series {
                            name: "honest".into(),
                            points: points.iter().map(|&(x, _)| (x, alpha_a)).collect(),
                        },
                    ],
                }
                .save(path)?;
            }
            g.emit(&table)
        }
    }
}

pub fn run(experiment: Experiment, g: &Global) -> Result<()> {
    match experiment {
        Experiment::Table2(args) => reference_table(reference::table2()?, &args, g),
        Experiment::Table3(args) => reference_table(reference::table3()?, &args, g),
        Experiment::Table4(args) => reference_table(reference::table4()?, &args, g),
        Experiment::Fig3(args) => fig3(args, g),
        Experiment::Fig4(args) => {
            let set = args.pools.load()?;
            let t =
                args.settings
                    .trajectory(set.clone(), LagAttack::Selfish.strategy(), g.seed())?;
            emit_trajectory(g, LagAttack::Selfish, &set, &args.settings, &t)
        }
        Experiment::Fig5(args) => fig5(args, g),
        Experiment::Fig6(args) => fig6(args, g),
    }
}
