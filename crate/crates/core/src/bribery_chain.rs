//! Bribe sizing and the reward chains of the bribery and undercutting
//! attacks.
//!
//! Both attacks split the non-adversarial pools into targets, whose blocks
//! the adversary tries to orphan, and everyone else. The bribery attack pays
//! other pools to mine a rival for each target block; the undercutting
//! attack mines the rival itself and pays `ε` for support.

use std::fmt;

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::model::{EpochModel, PoolSet};

/// How a bribe is delivered, which fixes the meaning of the `br` fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BribeVariant {
    /// Smart contract against a known target miner: `br1` for the rival
    /// block, `br2` for the block that extends it.
    KnownMiner,
    /// Whale transaction valid only on the rival fork.
    Whale,
    /// Smart contract when the target's miner is unknown.
    UnknownMiner,
    /// The `ε` attached to a matching fork in selfish mining.
    SelfishMatch,
    /// Bribes paid for mining on a distracting puzzle.
    Distraction,
}

/// Normalized bribes (fractions of the block reward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BribeSchedule {
    pub variant: BribeVariant,
    pub br1: f64,
    pub br2: f64,
    pub br3: f64,
    pub br4: f64,
}

impl BribeSchedule {
    pub fn new(variant: BribeVariant, br1: f64, br2: f64) -> Self {
        BribeSchedule {
            variant,
            br1,
            br2,
            br3: 0.0,
            br4: 0.0,
        }
    }

    /// Total paid to orphan one block.
    pub fn total(&self) -> f64 {
        self.br1 + self.br2 + self.br3 + self.br4
    }

    /// Whether orphaning a block with these bribes beats honest mining for
    /// an adversary with share `alpha_a`.
    pub fn is_profitable_for(&self, alpha_a: f64) -> bool {
        alpha_a > self.total()
    }
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    ensure(value > 0.0 && value < 1.0, || {
        Error::Domain(format!("{name} must lie in (0, 1), got {value}"))
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    ensure(epsilon.is_finite() && epsilon >= 0.0, || {
        Error::Domain(format!("epsilon must be >= 0, got {epsilon}"))
    })
}

/// Supremum of profitable total bribes per orphaned block: the adversary's
/// own share.
pub fn max_profitable_bribe(alpha_a: f64) -> Result<f64> {
    check_fraction("alpha_A", alpha_a)?;
    Ok(alpha_a)
}

/// Long-run profit per unit time when `rivals_per_epoch` blocks per epoch
/// are orphaned at total bribe `br` each.
pub fn bribery_profit(
    alpha_a: f64,
    br: f64,
    rivals_per_epoch: f64,
    epoch: &EpochModel,
) -> Result<f64> {
    check_fraction("alpha_A", alpha_a)?;
    ensure(br >= 0.0 && rivals_per_epoch >= 0.0, || {
        Error::Domain("bribe and rival count must be non-negative".into())
    })?;
    epoch.validate()?;
    let vr = epoch.value_rate();
    Ok(vr * alpha_a + vr * rivals_per_epoch / epoch.epoch_length as f64 * (alpha_a - br))
}

pub fn required_bribes_known(alpha_i: f64, epsilon: f64) -> Result<BribeSchedule> {
    check_fraction("alpha_i", alpha_i)?;
    check_epsilon(epsilon)?;
    Ok(BribeSchedule::new(
        BribeVariant::KnownMiner,
        alpha_i + epsilon,
        epsilon,
    ))
}

pub fn required_bribes_whale(alpha_i: f64, epsilon: f64) -> Result<BribeSchedule> {
    check_fraction("alpha_i", alpha_i)?;
    check_epsilon(epsilon)?;
    Ok(BribeSchedule::new(
        BribeVariant::Whale,
        (alpha_i + epsilon) / (1.0 - alpha_i),
        epsilon,
    ))
}

/// Bribes when the target's miner is hidden, sized for the petty pool that
/// is cheapest to convince (lowest residual factor over all pools).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnknownMinerBribes {
    pub schedule: BribeSchedule,
    /// Pool whose residual factor sets `br1`.
    pub cheapest_pool: usize,
    pub residual_factor: f64,
    pub feasible: bool,
}

pub fn required_bribes_unknown(pools: &PoolSet, epsilon: f64) -> Result<UnknownMinerBribes> {
    check_epsilon(epsilon)?;
    let (cheapest_pool, residual_factor) = pools
        .others()
        .filter(|&j| !pools.pools()[j].honest)
        .map(|j| pools.residual_centralization_factor(j).map(|r| (j, r)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Validation("no petty-compliant pool to bribe".into()))?;
    let schedule = BribeSchedule::new(
        BribeVariant::UnknownMiner,
        residual_factor + epsilon,
        epsilon,
    );
    Ok(UnknownMinerBribes {
        feasible: schedule.is_profitable_for(pools.adversary_share()),
        schedule,
        cheapest_pool,
        residual_factor,
    })
}

/// Target share must stay this far below `1 - α` so non-target pools keep
/// a positive share after rounding.
const PARTITION_SLACK: f64 = 1e-12;

/// Pools whose blocks the adversary attacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetPartition {
    pub targets: Vec<usize>,
    pub nontargets: Vec<usize>,
    /// Target shares, aligned with `targets`.
    pub shares: Vec<f64>,
}

impl TargetPartition {
    pub fn new(pools: &PoolSet, targets: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pools.len()];
        for &t in &targets {
            ensure(t < pools.len(), || {
                Error::Validation(format!("target index {t} out of range"))
            })?;
            ensure(t != pools.adversary(), || {
                Error::Validation("the adversary cannot target itself".into())
            })?;
            ensure(!seen[t], || {
                Error::Validation(format!("target {t} listed twice"))
            })?;
            seen[t] = true;
        }
        let shares: Vec<f64> = targets.iter().map(|&t| pools.pools()[t].share).collect();
        let b: f64 = shares.iter().sum();
        ensure(b < 1.0 - pools.adversary_share() - PARTITION_SLACK, || {
            Error::Validation(format!(
                "targets hold {b:.6} of the hash rate; at least one non-target pool is required"
            ))
        })?;
        let nontargets = pools.others().filter(|&i| !seen[i]).collect();
        Ok(TargetPartition {
            targets,
            nontargets,
            shares,
        })
    }

    /// Every petty pool the adversary can profitably bribe against:
    /// share + 2ε below the adversary's share. When that would leave no
    /// other pool, the largest candidate stays a non-target.
    pub fn default_for(pools: &PoolSet, epsilon: f64) -> Result<Self> {
        let alpha = pools.adversary_share();
        let mut targets: Vec<usize> = pools
            .others()
            .filter(|&i| {
                let p = &pools.pools()[i];
                !p.honest && p.share + 2.0 * epsilon < alpha
            })
            .collect();
        if targets.len() == pools.len() - 1 {
            let share = |i: usize| pools.pools()[i].share;
            if let Some(k) =
                (0..targets.len()).max_by(|&a, &b| share(targets[a]).total_cmp(&share(targets[b])))
            {
                targets.remove(k);
            }
        }
        Self::new(pools, targets)
    }

    pub fn from_names(pools: &PoolSet, names: &[&str]) -> Result<Self> {
        let targets = names
            .iter()
            .map(|n| {
                pools
                    .index_of(n)
                    .ok_or_else(|| Error::Validation(format!("no pool named {n:?}")))
            })
            .collect::<Result<_>>()?;
        Self::new(pools, targets)
    }

    /// Total target share `b`.
    pub fn total(&self) -> f64 {
        self.shares.iter().sum()
    }

    /// `Σ b_i / (1 - b_i)`.
    pub fn beta(&self) -> f64 {
        self.shares.iter().map(|b| b / (1.0 - b)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainState {
    /// Tip is not a target block.
    Idle,
    /// Tip is a block of target `i` (position in the partition).
    Target(usize),
    /// A rival to target `i`'s block is in play.
    Rival(usize),
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainState::Idle => write!(f, "S0"),
            ChainState::Target(i) => write!(f, "S1^{}", i + 1),
            ChainState::Rival(i) => write!(f, "S2^{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub probability: f64,
    pub blocks_added: u32,
    /// Adversarial reward net of bribes, in block rewards.
    pub adversary_profit: f64,
}

/// A finite Markov chain whose transitions carry block and reward counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardChain {
    pub states: Vec<ChainState>,
    pub transitions: Vec<Transition>,
}

const ROW_TOLERANCE: f64 = 1e-9;

impl RewardChain {
    fn from_rows(states: Vec<ChainState>, transitions: Vec<Transition>) -> Result<Self> {
        let chain = RewardChain {
            states,
            transitions,
        };
        chain.check_rows()?;
        Ok(chain)
    }

    fn check_rows(&self) -> Result<()> {
        let mut rows = vec![0.0; self.states.len()];
        for t in &self.transitions {
            ensure(t.probability >= 0.0, || {
                Error::Consistency(format!(
                    "negative probability {} from {}",
                    t.probability, self.states[t.from]
                ))
            })?;
            rows[t.from] += t.probability;
        }
        for (s, total) in rows.iter().enumerate() {
            ensure((total - 1.0).abs() <= ROW_TOLERANCE, || {
                Error::Consistency(format!(
                    "row {} sums to {total}, expected 1",
                    self.states[s]
                ))
            })?;
        }
        Ok(())
    }

    pub fn index_of(&self, state: ChainState) -> Option<usize> {
        self.states.iter().position(|&s| s == state)
    }

    /// Stationary distribution by power iteration on the lazy chain.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.states.len();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        const MAX_ITERATIONS: usize = 1_000_000;
        for _ in 0..MAX_ITERATIONS {
            next.iter_mut().zip(&pi).for_each(|(x, p)| *x = 0.5 * p);
            for t in &self.transitions {
                next[t.to] += 0.5 * pi[t.from] * t.probability;
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if diff < 1e-15 {
                return Ok(pi);
            }
        }
        Err(Error::Convergence {
            what: "stationary distribution".into(),
            iterations: MAX_ITERATIONS,
            residual: f64::NAN,
        })
    }

    /// Expected adversarial profit over expected blocks added, under a
    /// given state distribution.
    pub fn reward_share_with(&self, pi: &[f64]) -> f64 {
        let (profit, blocks) = self.transitions.iter().fold((0.0, 0.0), |(p, b), t| {
            let w = pi[t.from] * t.probability;
            (p + w * t.adversary_profit, b + w * t.blocks_added as f64)
        });
        profit / blocks
    }

    pub fn reward_share(&self) -> Result<f64> {
        Ok(self.reward_share_with(&self.stationary()?))
    }
}

/// Stationary probabilities `(P0, P1^i, P2^i)` of a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainProbabilities {
    pub idle: f64,
    pub target: Vec<f64>,
    pub rival: Vec<f64>,
}

impl ChainProbabilities {
    pub fn total(&self) -> f64 {
        self.idle + self.target.iter().sum::<f64>() + self.rival.iter().sum::<f64>()
    }

    /// Lays the probabilities out in a chain's state order.
    pub fn as_vector(&self, chain: &RewardChain) -> Vec<f64> {
        chain
            .states
            .iter()
            .map(|s| match *s {
                ChainState::Idle => self.idle,
                ChainState::Target(i) => self.target[i],
                ChainState::Rival(i) => self.rival[i],
            })
            .collect()
    }
}

fn chain_states(n: usize) -> Vec<ChainState> {
    std::iter::once(ChainState::Idle)
        .chain((0..n).map(ChainState::Target))
        .chain((0..n).map(ChainState::Rival))
        .collect()
}

fn check_chain_inputs(alpha: f64, partition: &TargetPartition, epsilon: f64) -> Result<()> {
    check_fraction("alpha_A", alpha)?;
    check_epsilon(epsilon)?;
    ensure(partition.total() < 1.0 - alpha, || {
        Error::Validation("targets and adversary cover the whole network".into())
    })
}

pub fn build_bribery_chain(
    pools: &PoolSet,
    partition: &TargetPartition,
    epsilon: f64,
) -> Result<RewardChain> {
    bribery_chain_for(pools.adversary_share(), partition, epsilon)
}

/// Bribery chain from the adversary's share alone.
pub fn bribery_chain_for(
    alpha: f64,
    partition: &TargetPartition,
    epsilon: f64,
) -> Result<RewardChain> {
    check_chain_inputs(alpha, partition, epsilon)?;
    let n = partition.shares.len();
    let b = partition.total();
    let (s0, s1, s2) = (0, |i: usize| 1 + i, |i: usize| 1 + n + i);
    let edge = |from, to, probability, blocks_added, adversary_profit| Transition {
        from,
        to,
        probability,
        blocks_added,
        adversary_profit,
    };
    let mut t = vec![
        edge(s0, s0, alpha, 1, 1.0),
        edge(s0, s0, 1.0 - b - alpha, 1, 0.0),
    ];
    for (i, &bi) in partition.shares.iter().enumerate() {
        t.push(edge(s0, s1(i), bi, 0, 0.0));
        t.push(edge(s1(i), s0, alpha, 2, 1.0));
        t.push(edge(s1(i), s1(i), bi, 1, 0.0));
        t.push(edge(s1(i), s2(i), 1.0 - alpha - bi, 0, -bi - epsilon));
        t.push(edge(s2(i), s0, alpha, 2, 1.0));
        t.push(edge(s2(i), s0, 1.0 - b - alpha, 2, -epsilon));
        t.push(edge(s2(i), s1(i), bi, 1, 0.0));
        for (j, &bj) in partition.shares.iter().enumerate().filter(|&(j, _)| j != i) {
            t.push(edge(s2(i), s1(j), bj, 1, -epsilon));
        }
    }
    RewardChain::from_rows(chain_states(n), t)
}

pub fn bribery_stationary(alpha: f64, partition: &TargetPartition) -> ChainProbabilities {
    let b = partition.total();
    let beta = partition.beta();
    ChainProbabilities {
        idle: (1.0 - b + alpha * beta) / (1.0 + beta),
        target: partition
            .shares
            .iter()
            .map(|bi| bi / ((1.0 - bi) * (1.0 + beta)))
            .collect(),
        rival: partition
            .shares
            .iter()
            .map(|bi| bi * (1.0 - alpha - bi) / ((1.0 - bi) * (1.0 + beta)))
            .collect(),
    }
}

/// Closed-form adversarial reward share under the bribery attack.
pub fn bribery_reward_share(alpha: f64, partition: &TargetPartition, epsilon: f64) -> Result<f64> {
    check_chain_inputs(alpha, partition, epsilon)?;
    let p = bribery_stationary(alpha, partition);
    ensure((p.total() - 1.0).abs() <= ROW_TOLERANCE, || {
        Error::Consistency(format!("bribery probabilities sum to {}", p.total()))
    })?;
    let b = partition.total();
    let (mut cost, mut blocks) = (0.0, p.idle * (1.0 - b));
    for (i, &bi) in partition.shares.iter().enumerate() {
        let lose = 1.0 - alpha - bi;
        cost += p.target[i] * lose * (bi + epsilon) + p.rival[i] * lose * epsilon;
        blocks += p.target[i] * (bi + 2.0 * alpha) + p.rival[i] * (2.0 - b);
    }
    Ok((alpha - cost) / blocks)
}

pub fn build_undercut_chain(
    pools: &PoolSet,
    partition: &TargetPartition,
    epsilon: f64,
) -> Result<RewardChain> {
    undercut_chain_for(pools.adversary_share(), partition, epsilon)
}

pub fn undercut_chain_for(
    alpha: f64,
    partition: &TargetPartition,
    epsilon: f64,
) -> Result<RewardChain> {
    check_chain_inputs(alpha, partition, epsilon)?;
    let n = partition.shares.len();
    let b = partition.total();
    let (s0, s1, s2) = (0, |i: usize| 1 + i, |i: usize| 1 + n + i);
    let edge = |from, to, probability, blocks_added, adversary_profit| Transition {
        from,
        to,
        probability,
        blocks_added,
        adversary_profit,
    };
    let mut t = vec![
        edge(s0, s0, alpha, 1, 1.0),
        edge(s0, s0, 1.0 - b - alpha, 1, 0.0),
    ];
    for (i, &bi) in partition.shares.iter().enumerate() {
        t.push(edge(s0, s1(i), bi, 0, 0.0));
        t.push(edge(s1(i), s2(i), alpha, 0, 0.0));
        t.push(edge(s1(i), s0, 1.0 - b - alpha, 2, 0.0));
        for (j, &bj) in partition.shares.iter().enumerate() {
            t.push(edge(s1(i), s1(j), bj, 1, 0.0));
        }
        t.push(edge(s2(i), s0, alpha, 2, 2.0));
        t.push(edge(s2(i), s0, 1.0 - b - alpha, 2, 1.0 - epsilon));
        t.push(edge(s2(i), s1(i), bi, 1, 0.0));
        for (j, &bj) in partition.shares.iter().enumerate().filter(|&(j, _)| j != i) {
            t.push(edge(s2(i), s1(j), bj, 1, 1.0 - epsilon));
        }
    }
    RewardChain::from_rows(chain_states(n), t)
}

pub fn undercut_stationary(alpha: f64, partition: &TargetPartition) -> ChainProbabilities {
    let b = partition.total();
    ChainProbabilities {
        idle: 1.0 - b * (1.0 + alpha),
        target: partition.shares.clone(),
        rival: partition.shares.iter().map(|bi| alpha * bi).collect(),
    }
}

/// Closed-form adversarial reward share under the undercutting attack.
pub fn undercut_reward_share(alpha: f64, partition: &TargetPartition, epsilon: f64) -> Result<f64> {
    check_chain_inputs(alpha, partition, epsilon)?;
    let p = undercut_stationary(alpha, partition);
    ensure((p.total() - 1.0).abs() <= ROW_TOLERANCE, || {
        Error::Consistency(format!("undercut probabilities sum to {}", p.total()))
    })?;
    let b = partition.total();
    let (mut gain, mut blocks) = (p.idle * alpha, p.idle * (1.0 - b));
    for (i, &bi) in partition.shares.iter().enumerate() {
        gain += p.rival[i] * (2.0 * alpha + (1.0 - alpha - bi) * (1.0 - epsilon));
        blocks += p.target[i] * (2.0 - 2.0 * alpha - b) + p.rival[i] * (2.0 - b);
    }
    Ok(gain / blocks)
}
