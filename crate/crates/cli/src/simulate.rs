use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use powplay_core::model::AttackParams;
use powplay_core::sim::{
    mean_and_std_error, revenue_advantage_trajectory, simulate_replicas, DamMode, Horizon,
    SimConfig, Strategy, Trajectory, TrajectoryMethod,
};
use powplay_core::PoolSet;

use crate::output::{num, opt, Table};
use crate::svg::{Chart, Series};
use crate::{Global, PoolArgs};

#[derive(Subcommand)]
pub enum SimCommand {
    /// Run a simulation described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Independent replicas on separate random streams.
        #[arg(long, default_value_t = 1)]
        replicas: u32,
    },
    /// Cumulative revenue advantage of an attack over honest mining.
    ProfitLag(LagArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LagAttack {
    Selfish,
    Bribery,
    Undercut,
}

impl LagAttack {
    pub fn strategy(self) -> Strategy {
        match self {
            LagAttack::Selfish => Strategy::PiSelfish,
            LagAttack::Bribery => Strategy::Bribery { targets: None },
            LagAttack::Undercut => Strategy::Undercut { targets: None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Propagate the state distribution; no sampling noise.
    Expected,
    /// Average seeded replicas.
    MonteCarlo,
}

/// Settings shared by every profit-lag run.
#[derive(Args, Clone, Debug)]
pub struct LagSettings {
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Difficulty epochs to simulate.
    #[arg(long, default_value_t = 20)]
    pub epochs: u32,
    /// Blocks per difficulty epoch.
    #[arg(long, default_value_t = powplay_core::model::BITCOIN_EPOCH_LENGTH)]
    pub epoch_length: u32,
    #[arg(long, value_enum, default_value_t = Method::Expected)]
    pub method: Method,
    /// Replicas for the Monte Carlo method.
    #[arg(long, default_value_t = 64)]
    pub replicas: u32,
    /// Count orphaned blocks as work when retargeting.
    #[arg(long)]
    pub active_power: bool,
}

impl LagSettings {
    pub fn method_name(&self) -> &'static str {
        match self.method {
            Method::Expected => "expected",
            Method::MonteCarlo => "monte_carlo",
        }
    }

    pub fn trajectory(&self, pools: PoolSet, strategy: Strategy, seed: u64) -> Result<Trajectory> {
        let dam = if self.active_power {
            DamMode::ActivePower
        } else {
            DamMode::CanonicalOnly
        };
        let cfg = SimConfig::new(
            pools,
            AttackParams::new(self.epsilon)?,
            strategy,
            Horizon::Epochs(self.epochs),
        )
        .with_seed(seed)
        .with_epoch_length(self.epoch_length)
        .with_dam_mode(dam);
        let method = match self.method {
            Method::Expected => TrajectoryMethod::Expected,
            Method::MonteCarlo => TrajectoryMethod::MonteCarlo {
                replicas: self.replicas,
            },
        };
        let t = revenue_advantage_trajectory(&cfg, method)?;
        for w in &t.warnings {
            eprintln!("warning: {w}");
        }
        Ok(t)
    }
}

#[derive(Args, Clone, Debug)]
pub struct LagArgs {
    #[arg(long, value_enum, default_value_t = LagAttack::Selfish)]
    pub attack: LagAttack,
    #[command(flatten)]
    pub pools: PoolArgs,
    #[command(flatten)]
    pub settings: LagSettings,
}

/// Writes one trajectory as `time, cumulative_advantage` rows, with the run
/// parameters alongside.
pub fn emit_trajectory(
    g: &Global,
    attack: LagAttack,
    pools: &PoolSet,
    settings: &LagSettings,
    t: &Trajectory,
) -> Result<()> {
    let adversary = &pools.pools()[pools.adversary()].name;
    let mut table = Table::new(&[
        "attack",
        "adversary",
        "adversary_share",
        "epsilon",
        "epoch_length",
        "method",
        "seed",
        "epoch",
        "time",
        "cumulative_advantage",
    ]);
    let mut epoch = 1;
    for &(time, adv) in &t.points {
        while epoch <= t.epoch_ends.len() && time > t.epoch_ends[epoch - 1] {
            epoch += 1;
        }
        table.push(vec![
            json!(format!("{attack:?}").to_lowercase()),
            json!(adversary),
            num(pools.adversary_share()),
            num(settings.epsilon),
            json!(settings.epoch_length),
            json!(settings.method_name()),
            json!(g.seed()),
            json!(epoch),
            num(time),
            num(adv),
        ]);
    }
    eprintln!(
        "{adversary}: epoch-1 advantage in [{:.3}, {:.3}], back to zero at {}",
        t.first_epoch_min,
        t.first_epoch_max,
        t.profit_lag.map_or("never".to_string(), |l| format!(
            "{l:.0} ({:.2} epochs)",
            l / settings.epoch_length as f64
        ))
    );
    if let Some(path) = &g.svg {
        Chart {
            title: format!("{attack:?} by {adversary}: revenue advantage over honest mining"),
            x_label: "time (target block intervals)".into(),
            y_label: "cumulative advantage (block rewards)".into(),
            series: vec![Series {
                name: adversary.clone(),
                points: t.points.clone(),
            }],
        }
        .save(path)?;
    }
    g.emit(&table)
}

pub fn run(command: SimCommand, g: &Global) -> Result<()> {
    match command {
        SimCommand::Run { config, replicas } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = SimConfig::from_json_str(&text)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            let runs = simulate_replicas(&cfg, replicas)?;
            let horizon = match cfg.horizon {
                Horizon::Blocks(n) => format!("{n} blocks"),
                Horizon::Epochs(n) => format!("{n} epochs"),
            };
            let mut table = Table::new(&[
                "strategy",
                "adversary_share",
                "epsilon",
                "dam_mode",
                "epoch_length",
                "horizon",
                "seed",
                "replica",
                "reward_share",
                "revenue",
                "profit_rate",
                "elapsed",
                "mined_blocks",
                "canonical_blocks",
                "orphan_count",
                "epochs",
                "final_difficulty",
            ]);
            for (r, s) in runs.iter().enumerate() {
                table.push(vec![
                    json!(cfg.strategy.to_string()),
                    num(cfg.pools.adversary_share()),
                    num(cfg.params.epsilon),
                    json!(match cfg.dam_mode {
                        DamMode::CanonicalOnly => "canonical_only",
                        DamMode::ActivePower => "active_power",
                    }),
                    json!(cfg.epoch_length),
                    json!(horizon),
                    json!(cfg.seed),
                    json!(r),
                    num(s.adversary_reward_share),
                    num(s.adversary_revenue),
                    num(s.profit_rate),
                    num(s.elapsed),
                    json!(s.mined_blocks),
                    json!(s.canonical_blocks),
                    json!(s.orphan_count),
                    json!(s.epoch_durations.len()),
                    opt(s.difficulties.last().copied()),
                ]);
            }
            if runs.len() > 1 {
                let shares: Vec<f64> = runs.iter().map(|s| s.adversary_reward_share).collect();
                let rates: Vec<f64> = runs.iter().map(|s| s.profit_rate).collect();
                let (ms, ss) = mean_and_std_error(&shares);
                let (mr, sr) = mean_and_std_error(&rates);
                eprintln!("reward share {ms:.5} +- {ss:.5}; profit rate {mr:.5} +- {sr:.5}");
            }
            g.emit(&table)
        }
        SimCommand::ProfitLag(args) => {
            let pools = args.pools.load()?;
            let t = args
                .settings
                .trajectory(pools.clone(), args.attack.strategy(), g.seed())?;
            emit_trajectory(g, args.attack, &pools, &args.settings, &t)
        }
    }
}
