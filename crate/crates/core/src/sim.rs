//! Seeded Monte Carlo simulation of block production under an attack
//! strategy, with difficulty adjustment.
//!
//! Time is measured in target block intervals and revenue in block rewards.
//! Each draw picks who finds the next puzzle solution, weighted by hash
//! share; the gap since the previous draw is exponential with the current
//! solution rate over the difficulty. Strategies are written as pool-level
//! rules: given the attack state and the winning pool, they say which
//! blocks become canonical and what the adversary earns or pays.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bribery_chain::TargetPartition;
use crate::error::{ensure, Error, Result};
use crate::mdp::{build_mdp, solve_reward_share, MdpOptions, PolicyWalker, SolverOptions};
use crate::model::{AttackParams, PoolSet, BITCOIN_EPOCH_LENGTH};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Honest,
    /// Withhold up to two blocks and match with an `ε` bribe.
    PiSelfish,
    /// Pay other pools to orphan target blocks. Targets default to every
    /// petty pool the adversary can profitably bribe against.
    Bribery {
        #[serde(default)]
        targets: Option<Vec<String>>,
    },
    /// Mine rivals to target blocks and share their reward.
    Undercut {
        #[serde(default)]
        targets: Option<Vec<String>>,
    },
    /// Follow the solved optimal race policy.
    MdpPolicy {
        #[serde(default = "default_fork_cap")]
        fork_cap: u32,
    },
    /// Post an easier puzzle while holding a block. Petty pools solve the
    /// puzzle; honest-flagged pools keep mining Bitcoin.
    Distraction {
        d_ratio: f64,
        br2: f64,
    },
}

fn default_fork_cap() -> u32 {
    MdpOptions::default().fork_cap
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Strategy::Honest => "honest",
            Strategy::PiSelfish => "pi_selfish",
            Strategy::Bribery { .. } => "bribery",
            Strategy::Undercut { .. } => "undercut",
            Strategy::MdpPolicy { .. } => "mdp_policy",
            Strategy::Distraction { .. } => "distraction",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DamMode {
    /// Retarget from canonical blocks per unit time.
    #[default]
    CanonicalOnly,
    /// Retarget from all mined blocks, orphans included.
    ActivePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Puzzle solutions drawn.
    Blocks(u64),
    /// Completed difficulty epochs.
    Epochs(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub pools: PoolSet,
    pub params: AttackParams,
    pub strategy: Strategy,
    pub horizon: Horizon,
    pub seed: u64,
    pub dam_mode: DamMode,
    pub epoch_length: u32,
    /// Record the revenue advantage every this many draws; 0 disables it.
    pub trajectory_stride: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimConfigFile {
    pools: serde_json::Value,
    #[serde(default)]
    epsilon: f64,
    #[serde(default)]
    max_bribe: Option<u32>,
    strategy: Strategy,
    horizon: Horizon,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    dam_mode: DamMode,
    #[serde(default)]
    epoch_length: Option<u32>,
    #[serde(default)]
    trajectory_stride: u64,
}

impl SimConfig {
    pub fn new(pools: PoolSet, params: AttackParams, strategy: Strategy, horizon: Horizon) -> Self {
        SimConfig {
            pools,
            params,
            strategy,
            horizon,
            seed: DEFAULT_SEED,
            dam_mode: DamMode::default(),
            epoch_length: BITCOIN_EPOCH_LENGTH,
            trajectory_stride: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dam_mode(mut self, dam_mode: DamMode) -> Self {
        self.dam_mode = dam_mode;
        self
    }

    pub fn with_epoch_length(mut self, epoch_length: u32) -> Self {
        self.epoch_length = epoch_length;
        self
    }

    pub fn with_trajectory_stride(mut self, stride: u64) -> Self {
        self.trajectory_stride = stride;
        self
    }

    /// Parses a JSON config whose `pools` field is a pool file object.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SimConfigFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("bad simulation config: {e}")))?;
        let pools = PoolSet::from_json_str(&file.pools.to_string())?;
        let mut params = AttackParams::new(file.epsilon)?;
        if let Some(mb) = file.max_bribe {
            params = params.with_max_bribe(mb);
        }
        let config = SimConfig {
            pools,
            params,
            strategy: file.strategy,
            horizon: file.horizon,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            dam_mode: file.dam_mode,
            epoch_length: file.epoch_length.unwrap_or(BITCOIN_EPOCH_LENGTH),
            trajectory_stride: file.trajectory_stride,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        ensure(self.epoch_length >= 1, || {
            Error::Validation("epoch length must be at least 1".into())
        })?;
        let positive = match self.horizon {
            Horizon::Blocks(n) => n >= 1,
            Horizon::Epochs(n) => n >= 1,
        };
        ensure(positive, || {
            Error::Validation("horizon must be at least 1".into())
        })?;
        if let Strategy::Distraction { d_ratio, br2 } = self.strategy {
            ensure(d_ratio.is_finite() && d_ratio >= 1.0, || {
                Error::Validation(format!("difficulty ratio must be >= 1, got {d_ratio}"))
            })?;
            ensure((0.0..1.0).contains(&br2), || {
                Error::Validation(format!("puzzle reward must lie in [0, 1), got {br2}"))
            })?;
        }
        Ok(())
    }
}

/// Work counted at a difficulty boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochCounts {
    pub canonical: f64,
    /// Bitcoin blocks mined in the epoch, orphans included.
    pub mined: f64,
}

/// Next difficulty after an epoch of `epoch_duration` target intervals.
pub fn dam_update(
    difficulty: f64,
    epoch_duration: f64,
    counts: EpochCounts,
    mode: DamMode,
) -> Result<f64> {
    ensure(epoch_duration > 0.0 && difficulty > 0.0, || {
        Error::Domain(format!(
            "epoch duration ({epoch_duration}) and difficulty ({difficulty}) must be positive"
        ))
    })?;
    let work = match mode {
        DamMode::CanonicalOnly => counts.canonical,
        DamMode::ActivePower => counts.mined,
    };
    ensure(work > 0.0, || {
        Error::Domain("no blocks counted in the epoch".into())
    })?;
    Ok(difficulty * work / epoch_duration)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Net adversarial revenue over canonical blocks.
    pub adversary_reward_share: f64,
    pub adversary_revenue: f64,
    /// Net adversarial revenue per unit time.
    pub profit_rate: f64,
    pub elapsed: f64,
    pub transitions: u64,
    pub mined_blocks: u64,
    pub canonical_blocks: u64,
    pub orphan_count: u64,
    pub epoch_durations: Vec<f64>,
    /// Difficulty in force during each epoch, starting at 1.
    pub difficulties: Vec<f64>,
    /// `(time, revenue - alpha * time)` samples.
    pub revenue_advantage: Vec<(f64, f64)>,
    pub state_labels: Vec<String>,
    /// Fraction of draws taken from each state.
    pub state_occupancy: Vec<f64>,
    pub rng_draws: u64,
}

#[derive(Debug, Clone, Copy)]
struct Move {
    prob: f64,
    next: usize,
    settled: u32,
    revenue: f64,
    /// Whether the draw is a Bitcoin block rather than a puzzle solution.
    mined: bool,
}

/// A strategy compiled to a finite chain over attack states.
#[derive(Debug, Clone, Default)]
struct ChainProcess {
    labels: Vec<String>,
    /// Mined blocks neither canonical nor orphaned yet.
    pending: Vec<u32>,
    /// Solution rate relative to full Bitcoin hash power.
    rate: Vec<f64>,
    moves: Vec<Vec<Move>>,
}

impl ChainProcess {
    fn state(&mut self, label: impl Into<String>, pending: u32, rate: f64) -> usize {
        self.labels.push(label.into());
        self.pending.push(pending);
        self.rate.push(rate);
        self.moves.push(Vec::new());
        self.labels.len() - 1
    }

    fn push(&mut self, from: usize, prob: f64, next: usize, settled: u32, revenue: f64) {
        self.push_move(from, prob, next, settled, revenue, true);
    }

    fn push_move(
        &mut self,
        from: usize,
        prob: f64,
        next: usize,
        settled: u32,
        revenue: f64,
        mined: bool,
    ) {
        if prob > 0.0 {
            self.moves[from].push(Move {
                prob,
                next,
                settled,
                revenue,
                mined,
            });
        }
    }

    fn check(&self) -> Result<()> {
        for (label, moves) in self.labels.iter().zip(&self.moves) {
            let total: f64 = moves.iter().map(|m| m.prob).sum();
            ensure((total - 1.0).abs() < 1e-9, || {
                Error::Consistency(format!("state {label} has outgoing probability {total}"))
            })?;
        }
        Ok(())
    }
}

fn honest_process(pools: &PoolSet) -> ChainProcess {
    let mut c = ChainProcess::default();
    let s = c.state("honest", 0, 1.0);
    for (i, p) in pools.pools().iter().enumerate() {
        let revenue = if i == pools.adversary() { 1.0 } else { 0.0 };
        c.push(s, p.share, s, 1, revenue);
    }
    c
}

fn selfish_process(pools: &PoolSet, epsilon: f64) -> ChainProcess {
    let mut c = ChainProcess::default();
    let alpha = pools.adversary_share();
    let others: Vec<usize> = pools.others().collect();
    let share = |i: usize| pools.pools()[i].share;
    let (s00, s10, s20) = (
        c.state("00", 0, 1.0),
        c.state("10", 1, 1.0),
        c.state("20", 2, 1.0),
    );
    let s11: Vec<usize> = others
        .iter()
        .map(|&j| c.state(format!("11/{}", pools.pools()[j].name), 2, 1.0))
        .collect();
    c.push(s00, alpha, s10, 0, 0.0);
    c.push(s10, alpha, s20, 0, 0.0);
    c.push(s20, alpha, s20, 1, 1.0);
    for (k, &j) in others.iter().enumerate() {
        c.push(s00, share(j), s00, 1, 0.0);
        c.push(s10, share(j), s11[k], 0, 0.0);
        c.push(s20, share(j), s00, 2, 2.0);
        c.push(s11[k], alpha, s00, 2, 2.0);
        for &l in &others {
            // Petty pools other than the rival's miner take the bribe.
            let revenue = if l == j || pools.pools()[l].honest {
                0.0
            } else {
                1.0 - epsilon
            };
            c.push(s11[k], share(l), s00, 2, revenue);
        }
    }
    c
}

/// Shared `S0` / `S1^t` / `S2^t` layout of the two target attacks.
struct TargetStates {
    s0: usize,
    s1: Vec<usize>,
    s2: Vec<usize>,
    /// Target position per pool index.
    position: Vec<Option<usize>>,
}

fn target_states(c: &mut ChainProcess, pools: &PoolSet, part: &TargetPartition) -> TargetStates {
    let s0 = c.state("S0", 0, 1.0);
    let name = |t: usize| &pools.pools()[t].name;
    let s1 = part
        .targets
        .iter()
        .map(|&t| c.state(format!("S1/{}", name(t)), 1, 1.0))
        .collect();
    let s2 = part
        .targets
        .iter()
        .map(|&t| c.state(format!("S2/{}", name(t)), 2, 1.0))
        .collect();
    let mut position = vec![None; pools.len()];
    for (k, &t) in part.targets.iter().enumerate() {
        position[t] = Some(k);
    }
    let alpha = pools.adversary_share();
    let ts = TargetStates {
        s0,
        s1,
        s2,
        position,
    };
    c.push(s0, alpha, s0, 1, 1.0);
    for w in pools.others() {
        let share = pools.pools()[w].share;
        match ts.position[w] {
            Some(k) => c.push(s0, share, ts.s1[k], 0, 0.0),
            None => c.push(s0, share, s0, 1, 0.0),
        }
    }
    ts
}

fn bribery_process(pools: &PoolSet, part: &TargetPartition, epsilon: f64) -> ChainProcess {
    let mut c = ChainProcess::default();
    let ts = target_states(&mut c, pools, part);
    let alpha = pools.adversary_share();
    for (k, &t) in part.targets.iter().enumerate() {
        let bribe = pools.pools()[t].share + epsilon;
        c.push(ts.s1[k], alpha, ts.s0, 2, 1.0);
        c.push(ts.s2[k], alpha, ts.s0, 2, 1.0);
        for w in pools.others() {
            let pool = &pools.pools()[w];
            if w == t {
                c.push(ts.s1[k], pool.share, ts.s1[k], 1, 0.0);
                c.push(ts.s2[k], pool.share, ts.s1[k], 1, 0.0);
            } else if pool.honest {
                c.push(ts.s1[k], pool.share, ts.s0, 2, 0.0);
                c.push(ts.s2[k], pool.share, ts.s0, 2, 0.0);
            } else {
                // Any other petty pool mines the bribed rival, then extends it.
                c.push(ts.s1[k], pool.share, ts.s2[k], 0, -bribe);
                match ts.position[w] {
                    Some(j) => c.push(ts.s2[k], pool.share, ts.s1[j], 1, -epsilon),
                    None => c.push(ts.s2[k], pool.share, ts.s0, 2, -epsilon),
                }
            }
        }
    }
    c
}

fn undercut_process(pools: &PoolSet, part: &TargetPartition, epsilon: f64) -> ChainProcess {
    let mut c = ChainProcess::default();
    let ts = target_states(&mut c, pools, part);
    let alpha = pools.adversary_share();
    for (k, &t) in part.targets.iter().enumerate() {
        c.push(ts.s1[k], alpha, ts.s2[k], 0, 0.0);
        c.push(ts.s2[k], alpha, ts.s0, 2, 2.0);
        for w in pools.others() {
            let pool = &pools.pools()[w];
            match ts.position[w] {
                Some(j) => c.push(ts.s1[k], pool.share, ts.s1[j], 1, 0.0),
                None => c.push(ts.s1[k], pool.share, ts.s0, 2, 0.0),
            }
            if w == t {
                c.push(ts.s2[k], pool.share, ts.s1[k], 1, 0.0);
            } else if pool.honest {
                c.push(ts.s2[k], pool.share, ts.s0, 2, 0.0);
            } else {
                match ts.position[w] {
                    Some(j) => c.push(ts.s2[k], pool.share, ts.s1[j], 1, 1.0 - epsilon),
                    None => c.push(ts.s2[k], pool.share, ts.s0, 2, 1.0 - epsilon),
                }
            }
        }
    }
    c
}

fn distraction_process(pools: &PoolSet, d_ratio: f64, br2: f64, epsilon: f64) -> ChainProcess {
    let mut c = ChainProcess::default();
    let alpha = pools.adversary_share();
    let (compliant, bitcoin): (Vec<usize>, Vec<usize>) =
        pools.others().partition(|&i| !pools.pools()[i].honest);
    let share = |i: usize| pools.pools()[i].share;
    let c_share: f64 = compliant.iter().map(|&i| share(i)).sum();
    let nc_share: f64 = bitcoin.iter().map(|&i| share(i)).sum();
    let rate1 = d_ratio * c_share + nc_share + alpha;
    let (s0, s1, s2) = (
        c.state("s0", 0, 1.0),
        c.state("s1", 1, rate1),
        c.state("s2", 2, 1.0),
    );
    c.push(s0, alpha, s1, 0, 0.0);
    c.push(s1, alpha / rate1, s1, 1, 1.0);
    c.push(s2, alpha, s0, 2, 2.0);
    for &w in &compliant {
        c.push(s0, share(w), s0, 1, 0.0);
        c.push_move(s1, d_ratio * share(w) / rate1, s0, 1, 1.0 - br2, false);
        c.push(s2, share(w), s0, 2, 1.0 - epsilon);
    }
    for &w in &bitcoin {
        c.push(s0, share(w), s0, 1, 0.0);
        c.push(s1, share(w) / rate1, s2, 0, 0.0);
        c.push(s2, share(w), s0, 2, 0.0);
    }
    c
}

fn partition_for(
    pools: &PoolSet,
    targets: &Option<Vec<String>>,
    epsilon: f64,
) -> Result<TargetPartition> {
    match targets {
        Some(names) => {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            TargetPartition::from_names(pools, &names)
        }
        None => TargetPartition::default_for(pools, epsilon),
    }
}

fn chain_process(config: &SimConfig) -> Result<Option<ChainProcess>> {
    let pools = &config.pools;
    let eps = config.params.epsilon;
    let process = match &config.strategy {
        Strategy::Honest => honest_process(pools),
        Strategy::PiSelfish => selfish_process(pools, eps),
        Strategy::Bribery { targets } => {
            bribery_process(pools, &partition_for(pools, targets, eps)?, eps)
        }
        Strategy::Undercut { targets } => {
            undercut_process(pools, &partition_for(pools, targets, eps)?, eps)
        }
        Strategy::Distraction { d_ratio, br2 } => distraction_process(pools, *d_ratio, *br2, eps),
        Strategy::MdpPolicy { .. } => return Ok(None),
    };
    process.check()?;
    Ok(Some(process))
}

struct Draw {
    settled: u32,
    revenue: f64,
    mined: bool,
    rate: f64,
}

trait Walk {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> Draw;
    fn pending(&self) -> u32;
    fn state(&self) -> Option<usize>;
}

struct ChainWalk<'a> {
    process: &'a ChainProcess,
    state: usize,
}

impl Walk for ChainWalk<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> Draw {
        let moves = &self.process.moves[self.state];
        let mut u: f64 = rng.gen();
        let mut pick = moves.len() - 1;
        for (k, m) in moves.iter().enumerate() {
            if u < m.prob {
                pick = k;
                break;
            }
            u -= m.prob;
        }
        let m = moves[pick];
        let rate = self.process.rate[self.state];
        self.state = m.next;
        Draw {
            settled: m.settled,
            revenue: m.revenue,
            mined: m.mined,
            rate,
        }
    }

    fn pending(&self) -> u32 {
        self.process.pending[self.state]
    }

    fn state(&self) -> Option<usize> {
        Some(self.state)
    }
}

impl Walk for PolicyWalker<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> Draw {
        let s = PolicyWalker::step(self, rng.gen());
        Draw {
            settled: s.settled,
            revenue: s.revenue,
            mined: true,
            rate: 1.0,
        }
    }

    fn pending(&self) -> u32 {
        PolicyWalker::pending(self)
    }

    fn state(&self) -> Option<usize> {
        None
    }
}

/// Guard against horizons that never complete an epoch.
const MAX_DRAWS_PER_EPOCH_BLOCK: u64 = 1000;

fn run(
    walk: &mut dyn Walk,
    config: &SimConfig,
    labels: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<SimStats> {
    let alpha = config.pools.adversary_share();
    let l = config.epoch_length as u64;
    let draw_limit = match config.horizon {
        Horizon::Blocks(n) => n,
        Horizon::Epochs(n) => n as u64 * l * MAX_DRAWS_PER_EPOCH_BLOCK,
    };
    let mut difficulty = 1.0;
    let (mut t, mut revenue, mut advantage) = (0.0f64, 0.0f64, 0.0f64);
    let (mut settled, mut mined, mut draws) = (0u64, 0u64, 0u64);
    let (mut epoch_start, mut epoch_settled, mut epoch_mined) = (0.0f64, 0u64, 0u64);
    let mut epoch_durations = Vec::new();
    let mut difficulties = vec![difficulty];
    let mut trajectory = Vec::new();
    let mut occupancy = vec![0u64; labels.len()];
    loop {
        if let Horizon::Epochs(n) = config.horizon {
            if epoch_durations.len() >= n as usize {
                break;
            }
        }
        if draws >= draw_limit {
            ensure(matches!(config.horizon, Horizon::Blocks(_)), || {
                Error::Convergence {
                    what: "epoch horizon".into(),
                    iterations: draws as usize,
                    residual: epoch_durations.len() as f64,
                }
            })?;
            break;
        }
        if let Some(s) = walk.state() {
            occupancy[s] += 1;
        }
        let d = walk.step(rng);
        let gap: f64 = rng.sample::<f64, _>(Exp1) * difficulty / d.rate;
        draws += 1;
        t += gap;
        revenue += d.revenue;
        advantage += d.revenue - alpha * gap;
        settled += d.settled as u64;
        epoch_settled += d.settled as u64;
        if d.mined {
            mined += 1;
            epoch_mined += 1;
        }
        if epoch_settled >= l {
            let counts = EpochCounts {
                canonical: l as f64,
                mined: epoch_mined as f64,
            };
            difficulty = dam_update(difficulty, t - epoch_start, counts, config.dam_mode)?;
            epoch_durations.push(t - epoch_start);
            difficulties.push(difficulty);
            epoch_start = t;
            epoch_settled -= l;
            epoch_mined = 0;
        }
        if config.trajectory_stride > 0 && draws % config.trajectory_stride == 0 {
            trajectory.push((t, advantage));
        }
    }
    difficulties.truncate(epoch_durations.len().max(1));
    Ok(SimStats {
        adversary_reward_share: if settled > 0 {
            revenue / settled as f64
        } else {
            0.0
        },
        adversary_revenue: revenue,
        profit_rate: if t > 0.0 { revenue / t } else { 0.0 },
        elapsed: t,
        transitions: draws,
        mined_blocks: mined,
        canonical_blocks: settled,
        orphan_count: mined.saturating_sub(settled + walk.pending() as u64),
        epoch_durations,
        difficulties,
        revenue_advantage: trajectory,
        state_labels: labels.to_vec(),
        state_occupancy: occupancy
            .iter()
            .map(|&c| c as f64 / draws.max(1) as f64)
            .collect(),
        rng_draws: 2 * draws,
    })
}

/// A strategy ready to simulate, shared across replicas.
enum Prepared {
    Chain(ChainProcess),
    Mdp(Box<crate::mdp::MdpModel>, Vec<crate::mdp::MdpAction>),
}

fn prepare(config: &SimConfig) -> Result<Prepared> {
    config.validate()?;
    if let Some(process) = chain_process(config)? {
        return Ok(Prepared::Chain(process));
    }
    let Strategy::MdpPolicy { fork_cap } = config.strategy else {
        unreachable!("every other strategy compiles to a chain")
    };
    let options = MdpOptions::default().with_fork_cap(fork_cap);
    let model = build_mdp(&config.pools, &config.params, &options)?;
    let solved = solve_reward_share(&model, &SolverOptions::default())?;
    Ok(Prepared::Mdp(Box::new(model), solved.policy))
}

fn run_prepared(prepared: &Prepared, config: &SimConfig, replica: u64) -> Result<SimStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(replica);
    match prepared {
        Prepared::Chain(process) => {
            let mut walk = ChainWalk { process, state: 0 };
            run(&mut walk, config, &process.labels, &mut rng)
        }
        Prepared::Mdp(model, policy) => {
            let mut walk = PolicyWalker::new(model, policy)?;
            run(&mut walk, config, &[], &mut rng)
        }
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    run_prepared(&prepare(config)?, config, 0)
}

/// Independent replicas on separate random streams, in replica order.
pub fn simulate_replicas(config: &SimConfig, replicas: u32) -> Result<Vec<SimStats>> {
    ensure(replicas >= 1, || {
        Error::Validation("need at least one replica".into())
    })?;
    let prepared = prepare(config)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_prepared(&prepared, config, r))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMethod {
    /// Propagate the state distribution and accumulate expected revenue and
    /// time, retargeting when the expected canonical count fills an epoch.
    Expected,
    /// Average seeded replicas on a unit time grid.
    MonteCarlo { replicas: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `(time, cumulative revenue - alpha * time)`.
    pub points: Vec<(f64, f64)>,
    pub epoch_ends: Vec<f64>,
    /// Extremes over samples in `(0, end of epoch 1]`.
    pub first_epoch_max: f64,
    pub first_epoch_min: f64,
    /// First time after epoch 1 at which the advantage is back to zero or
    /// above; zero when it never dips.
    pub profit_lag: Option<f64>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    fn summarize(points: Vec<(f64, f64)>, epoch_ends: Vec<f64>, warnings: Vec<String>) -> Self {
        let end1 = epoch_ends.first().copied().unwrap_or(f64::INFINITY);
        let first: Vec<f64> = points
            .iter()
            .filter(|(t, _)| *t > 0.0 && *t <= end1)
            .map(|&(_, a)| a)
            .collect();
        let first_epoch_max = first.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first_epoch_min = first.iter().copied().fold(f64::INFINITY, f64::min);
        let profit_lag = if first_epoch_min >= 0.0 {
            Some(0.0)
        } else {
            points
                .iter()
                .find(|(t, a)| *t > end1 && *a >= 0.0)
                .map(|&(t, _)| t)
        };
        Trajectory {
            points,
            epoch_ends,
            first_epoch_max,
            first_epoch_min,
            profit_lag,
            warnings,
        }
    }
}

/// Cumulative revenue advantage of an attack over honest mining.
pub fn revenue_advantage_trajectory(
    config: &SimConfig,
    method: TrajectoryMethod,
) -> Result<Trajectory> {
    config.validate()?;
    let Horizon::Epochs(epochs) = config.horizon else {
        return Err(Error::Validation(
            "trajectories need an epoch horizon".into(),
        ));
    };
    let mut warnings = Vec::new();
    if epochs < 3 {
        warnings.push(format!(
            "horizon of {epochs} epochs may end before the profit lag resolves"
        ));
    }
    match method {
        TrajectoryMethod::Expected => {
            let process = chain_process(config)?.ok_or_else(|| {
                Error::Validation(format!(
                    "the {} strategy has no compiled chain; use the Monte Carlo method",
                    config.strategy
                ))
            })?;
            let (points, ends) = expected_trajectory(&process, config, epochs)?;
            Ok(Trajectory::summarize(points, ends, warnings))
        }
        TrajectoryMethod::MonteCarlo { replicas } => {
            let config = config.clone().with_trajectory_stride(1);
            let runs = simulate_replicas(&config, replicas)?;
            let (points, ends) = average_on_grid(&runs, config.pools.adversary_share());
            Ok(Trajectory::summarize(points, ends, warnings))
        }
    }
}

/// Trajectory points and the end time of each epoch.
type TrajectoryParts = (Vec<(f64, f64)>, Vec<f64>);

fn expected_trajectory(
    process: &ChainProcess,
    config: &SimConfig,
    epochs: u32,
) -> Result<TrajectoryParts> {
    let alpha = config.pools.adversary_share();
    let l = config.epoch_length as f64;
    let n = process.labels.len();
    let mut dist = vec![0.0; n];
    dist[0] = 1.0;
    let mut next = vec![0.0; n];
    let mut difficulty = 1.0;
    let (mut t, mut advantage) = (0.0f64, 0.0f64);
    let (mut epoch_start, mut epoch_settled, mut epoch_mined) = (0.0f64, 0.0f64, 0.0f64);
    let mut points = Vec::new();
    let mut ends = Vec::new();
    let limit = epochs as u64 * config.epoch_length as u64 * MAX_DRAWS_PER_EPOCH_BLOCK;
    let mut draws = 0u64;
    while ends.len() < epochs as usize {
        ensure(draws < limit, || Error::Convergence {
            what: "expected trajectory".into(),
            iterations: draws as usize,
            residual: ends.len() as f64,
        })?;
        draws += 1;
        next.iter_mut().for_each(|x| *x = 0.0);
        let (mut gap, mut revenue, mut settled, mut mined) = (0.0, 0.0, 0.0, 0.0);
        for (s, &p) in dist.iter().enumerate().filter(|(_, &p)| p > 0.0) {
            gap += p * difficulty / process.rate[s];
            for m in &process.moves[s] {
                let w = p * m.prob;
                next[m.next] += w;
                revenue += w * m.revenue;
                settled += w * m.settled as f64;
                if m.mined {
                    mined += w;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
        t += gap;
        advantage += revenue - alpha * gap;
        epoch_settled += settled;
        epoch_mined += mined;
        if epoch_settled >= l {
            let counts = EpochCounts {
                canonical: l,
                mined: epoch_mined,
            };
            difficulty = dam_update(difficulty, t - epoch_start, counts, config.dam_mode)?;
            ends.push(t);
            epoch_start = t;
            epoch_settled -= l;
            epoch_mined = 0.0;
        }
        points.push((t, advantage));
    }
    Ok((points, ends))
}

/// Averages replica trajectories at integer times, up to the shortest run.
fn average_on_grid(runs: &[SimStats], alpha: f64) -> (Vec<(f64, f64)>, Vec<f64>) {
    let end = runs.iter().map(|r| r.elapsed).fold(f64::INFINITY, f64::min);
    let steps = end.floor() as usize;
    let mut sums = vec![0.0; steps];
    for run in runs {
        // Advantage is piecewise: revenue jumps at draws, the honest term
        // grows linearly in between.
        let mut k = 0;
        let mut last = (0.0, 0.0);
        for &(t, a) in &run.revenue_advantage {
            while k < steps && ((k + 1) as f64) < t {
                let tk = (k + 1) as f64;
                sums[k] += last.1 - alpha * (tk - last.0);
                k += 1;
            }
            last = (t, a);
        }
        while k < steps {
            let tk = (k + 1) as f64;
            sums[k] += last.1 - alpha * (tk - last.0);
            k += 1;
        }
    }
    let n = runs.len() as f64;
    let points = sums
        .iter()
        .enumerate()
        .map(|(k, s)| ((k + 1) as f64, s / n))
        .collect();
    let epochs = runs
        .iter()
        .map(|r| r.epoch_durations.len())
        .min()
        .unwrap_or(0);
    let ends = (0..epochs)
        .map(|e| {
            runs.iter()
                .map(|r| r.epoch_durations[..=e].iter().sum::<f64>())
                .sum::<f64>()
                / n
        })
        .collect();
    (points, ends)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(pools: PoolSet, eps: f64, strategy: Strategy, n: u64) -> SimConfig {
        SimConfig::new(
            pools,
            AttackParams::new(eps).unwrap(),
            strategy,
            Horizon::Blocks(n),
        )
    }

    #[test]
    fn strategies_compile_to_stochastic_chains() {
        let pools = PoolSet::from_shares(0.3, &[0.2, 0.15, 0.35]).unwrap();
        for strategy in [
            Strategy::Honest,
            Strategy::PiSelfish,
            Strategy::Bribery { targets: None },
            Strategy::Undercut { targets: None },
            Strategy::Distraction {
                d_ratio: 4.0,
                br2: 0.05,
            },
        ] {
            let config = blocks(pools.clone(), 0.1, strategy, 10);
            chain_process(&config).unwrap().unwrap();
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let pools = PoolSet::from_shares(0.3, &[0.2, 0.5]).unwrap();
        let config = blocks(pools, 0.0, Strategy::PiSelfish, 50_000).with_trajectory_stride(100);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        let c = simulate(&config.clone().with_seed(7)).unwrap();
        assert_ne!(a.adversary_revenue, c.adversary_revenue);
    }

    #[test]
    fn honest_share_and_epochs() {
        let pools = PoolSet::from_shares(0.3, &[0.2, 0.5]).unwrap();
        let config = SimConfig::new(
            pools,
            AttackParams::default(),
            Strategy::Honest,
            Horizon::Epochs(5),
        )
        .with_epoch_length(1000);
        let s = simulate(&config).unwrap();
        assert_eq!(s.canonical_blocks, 5000);
        assert_eq!(s.orphan_count, 0);
        assert_eq!(s.epoch_durations.len(), 5);
        let se = (0.3f64 * 0.7 / 5000.0).sqrt();
        assert!((s.adversary_reward_share - 0.3).abs() < 3.0 * se);
    }

    #[test]
    fn dam_modes() {
        let counts = EpochCounts {
            canonical: 2016.0,
            mined: 2016.0,
        };
        let a = dam_update(1.0, 2400.0, counts, DamMode::CanonicalOnly).unwrap();
        let b = dam_update(1.0, 2400.0, counts, DamMode::ActivePower).unwrap();
        assert_eq!(a, b);
        // One block in ten orphaned at difficulty 1: the epoch takes 2240.
        let counts = EpochCounts {
            canonical: 2016.0,
            mined: 2240.0,
        };
        let a = dam_update(1.0, 2240.0, counts, DamMode::CanonicalOnly).unwrap();
        assert!((a - 0.9).abs() < 1e-12);
        assert!(
            (dam_update(1.0, 2240.0, counts, DamMode::ActivePower).unwrap() - 1.0).abs() < 1e-12
        );
        let none = EpochCounts {
            canonical: 0.0,
            mined: 0.0,
        };
        assert!(dam_update(1.0, 10.0, none, DamMode::CanonicalOnly).is_err());
        assert!(dam_update(1.0, 0.0, counts, DamMode::CanonicalOnly).is_err());
    }

    #[test]
    fn expected_honest_advantage_is_zero() {
        let pools = PoolSet::from_shares(0.3, &[0.2, 0.5]).unwrap();
        let config = SimConfig::new(
            pools,
            AttackParams::default(),
            Strategy::Honest,
            Horizon::Epochs(3),
        );
        let tr = revenue_advantage_trajectory(&config, TrajectoryMethod::Expected).unwrap();
        assert!(tr.points.iter().all(|&(_, a)| a.abs() < 1e-9));
        assert_eq!(tr.profit_lag, Some(0.0));
        assert!((tr.epoch_ends[0] - 2016.0).abs() < 1e-6);
    }

    #[test]
    fn config_parsing() {
        let text = r#"{
            "pools": {"pools": [{"name": "A", "share": 0.3}, {"name": "B", "share": 0.7}], "adversary": "A"},
            "epsilon": 0.1,
            "strategy": {"kind": "pi_selfish"},
            "horizon": {"epochs": 2},
            "dam_mode": "active_power"
        }"#;
        let config = SimConfig::from_json_str(text).unwrap();
        assert_eq!(config.seed, DEFAULT_SEED);
        assert_eq!(config.dam_mode, DamMode::ActivePower);
        let bad = text.replace("pi_selfish", "stubborn");
        assert!(matches!(
            SimConfig::from_json_str(&bad),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn mdp_policy_runs() {
        let pools = PoolSet::from_shares(0.4, &[0.3, 0.3]).unwrap();
        let config = blocks(pools, 0.1, Strategy::MdpPolicy { fork_cap: 6 }, 200_000);
        let s = simulate(&config).unwrap();
        assert!(s.adversary_reward_share > 0.4);
        assert!(s.orphan_count > 0);
    }
}
