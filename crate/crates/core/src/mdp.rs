//! Optimal selfish mining against explicit petty-compliant pools.
//!
//! The adversary races a private fork against the public one. Petty pools
//! always mine the longest chain and, between two chains of equal height,
//! the one paying more. `Match(i)` publishes an equal-height prefix carrying
//! a bribe of `i + ε` block rewards; every petty pool that has at most `i`
//! blocks on the public fork then mines on the adversarial prefix. The bribe
//! goes to the next non-adversarial block if it lands on the adversarial
//! fork and returns to the adversary otherwise.
//!
//! The objective is the long-run ratio of net adversarial rewards (blocks
//! minus bribes) to settled blocks. It is found by bisection on the ratio
//! with an average-reward value iteration inside each step. Value iteration
//! runs on post-decision states, which keeps every action deterministic and
//! puts all randomness in one nature step per mined block.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{AttackParams, PoolSet};

/// Largest supported number of non-adversarial pools.
pub const MAX_OTHER_POOLS: usize = 9;
/// Largest supported fork length.
pub const MAX_FORK_CAP: u32 = 63;
/// Largest supported integer bribe level.
pub const MAX_BRIBE_LEVEL: u32 = 14;
/// Default ceiling on enumerated decision states.
pub const DEFAULT_STATE_CEILING: usize = 10_000_000;

/// Who mined the most recent block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Latest {
    Adversary,
    Pool,
}

/// A decision point of the adversary, right after a block was mined.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MdpState {
    /// Blocks each non-adversarial pool has on the public fork, in pool-set
    /// order (adversary skipped). Counts saturate at `max_bribe + 1` since
    /// no bribe level distinguishes larger values; honest pools read 0.
    /// Pools with equal shares are interchangeable and their counts are
    /// stored sorted.
    pub fork_blocks: Vec<u32>,
    /// Exact length of the public fork.
    pub fork_len: u32,
    pub adversary_len: u32,
    pub latest: Latest,
    pub match_active: bool,
    pub bribe_level: u32,
}

impl fmt::Display for MdpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(fork={:?} len={} adv={} latest={:?}",
            self.fork_blocks, self.fork_len, self.adversary_len, self.latest
        )?;
        if self.match_active {
            write!(f, " match@{}", self.bribe_level)?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MdpAction {
    Adopt,
    Override,
    Wait,
    Match(u32),
}

impl fmt::Display for MdpAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpAction::Adopt => write!(f, "adopt"),
            MdpAction::Override => write!(f, "override"),
            MdpAction::Wait => write!(f, "wait"),
            MdpAction::Match(i) => write!(f, "match{i}"),
        }
    }
}

/// Solver knobs that are not part of the attack itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpOptions {
    /// Longest fork either side may build. At the cap the adversary must
    /// resolve the race: override when ahead, adopt otherwise.
    pub fork_cap: u32,
    pub state_ceiling: usize,
    /// Allow `Match` only when the latest block came from another pool,
    /// i.e. right as the public fork grew.
    pub match_needs_pool_latest: bool,
}

impl Default for MdpOptions {
    fn default() -> Self {
        MdpOptions {
            fork_cap: 8,
            state_ceiling: DEFAULT_STATE_CEILING,
            match_needs_pool_latest: false,
        }
    }
}

impl MdpOptions {
    pub fn with_fork_cap(mut self, fork_cap: u32) -> Self {
        self.fork_cap = fork_cap;
        self
    }
}

// Packed node layout, low bits first: 4 bits per tracked pool count
// (36 bits), fork length (6), adversary length (6), match level + 1 with 0
// meaning inactive (4), latest-is-pool (1).
const COUNT_BITS: u32 = 4;
const LEN_SHIFT: u32 = COUNT_BITS * MAX_OTHER_POOLS as u32;
const ADV_SHIFT: u32 = LEN_SHIFT + 6;
const MATCH_SHIFT: u32 = ADV_SHIFT + 6;
const LATEST_SHIFT: u32 = MATCH_SHIFT + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    counts: [u8; MAX_OTHER_POOLS],
    len: u8,
    adv: u8,
    /// Active bribe level + 1, or 0.
    matched: u8,
    latest_pool: bool,
}

impl Node {
    const EMPTY: Node = Node {
        counts: [0; MAX_OTHER_POOLS],
        len: 0,
        adv: 0,
        matched: 0,
        latest_pool: false,
    };

    fn pack(&self) -> u64 {
        let mut key = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            key |= (c as u64) << (COUNT_BITS * i as u32);
        }
        key | (self.len as u64) << LEN_SHIFT
            | (self.adv as u64) << ADV_SHIFT
            | (self.matched as u64) << MATCH_SHIFT
            | (self.latest_pool as u64) << LATEST_SHIFT
    }

    fn unpack(key: u64) -> Node {
        let mut counts = [0u8; MAX_OTHER_POOLS];
        for (i, c) in counts.iter_mut().enumerate() {
            *c = ((key >> (COUNT_BITS * i as u32)) & 0xF) as u8;
        }
        Node {
            counts,
            len: ((key >> LEN_SHIFT) & 0x3F) as u8,
            adv: ((key >> ADV_SHIFT) & 0x3F) as u8,
            matched: ((key >> MATCH_SHIFT) & 0xF) as u8,
            latest_pool: (key >> LATEST_SHIFT) & 1 == 1,
        }
    }
}

/// Reward attached to a transition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Payoff {
    /// Adversarial blocks settled minus bribes paid.
    net: f64,
    settled: u32,
}

/// A non-adversarial pool as the solver sees it.
#[derive(Debug, Clone)]
struct Miner {
    /// Index into the pool set.
    pool: usize,
    share: f64,
    /// Position in the packed counts, `None` for honest pools.
    slot: Option<usize>,
}

/// Transition rules of the race, independent of any enumeration.
#[derive(Debug, Clone)]
struct Dynamics {
    alpha: f64,
    epsilon: f64,
    max_bribe: u32,
    fork_cap: u32,
    match_needs_pool_latest: bool,
    miners: Vec<Miner>,
    /// Contiguous runs of slots holding interchangeable pools.
    groups: Vec<std::ops::Range<usize>>,
}

impl Dynamics {
    fn new(pools: &PoolSet, params: &AttackParams, options: &MdpOptions) -> Result<Self> {
        params.validate()?;
        ensure((2..=MAX_OTHER_POOLS + 1).contains(&pools.len()), || {
            Error::Validation(format!(
                "the solver supports 2 to {} pools, got {}",
                MAX_OTHER_POOLS + 1,
                pools.len()
            ))
        })?;
        ensure((2..=MAX_FORK_CAP).contains(&options.fork_cap), || {
            Error::Validation(format!(
                "fork cap must lie in [2, {MAX_FORK_CAP}], got {}",
                options.fork_cap
            ))
        })?;
        ensure(params.max_bribe <= MAX_BRIBE_LEVEL, || {
            Error::Validation(format!(
                "max bribe must be at most {MAX_BRIBE_LEVEL}, got {}",
                params.max_bribe
            ))
        })?;
        let mut petty: Vec<usize> = pools
            .others()
            .filter(|&i| !pools.pools()[i].honest)
            .collect();
        petty.sort_by(|&a, &b| pools.pools()[b].share.total_cmp(&pools.pools()[a].share));
        let mut miners = Vec::new();
        let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
        for (slot, &i) in petty.iter().enumerate() {
            let share = pools.pools()[i].share;
            match groups.last_mut() {
                Some(g) if miners.last().is_some_and(|m: &Miner| m.share == share) => {
                    g.end = slot + 1
                }
                _ => groups.push(slot..slot + 1),
            }
            miners.push(Miner {
                pool: i,
                share,
                slot: Some(slot),
            });
        }
        // Honest pools never switch forks, so one merged entry is enough.
        let honest: Vec<usize> = pools
            .others()
            .filter(|&i| pools.pools()[i].honest)
            .collect();
        if !honest.is_empty() {
            miners.push(Miner {
                pool: honest[0],
                share: honest.iter().map(|&i| pools.pools()[i].share).sum(),
                slot: None,
            });
        }
        Ok(Dynamics {
            alpha: pools.adversary_share(),
            epsilon: params.epsilon,
            max_bribe: params.max_bribe,
            fork_cap: options.fork_cap,
            match_needs_pool_latest: options.match_needs_pool_latest,
            miners,
            groups,
        })
    }

    fn saturation(&self) -> u8 {
        (self.max_bribe + 1) as u8
    }

    fn canonical(&self, mut node: Node) -> Node {
        for g in &self.groups {
            node.counts[g.clone()].sort_unstable_by(|a, b| b.cmp(a));
        }
        node
    }

    fn forced(&self, node: &Node) -> Option<MdpAction> {
        let cap = self.fork_cap as u8;
        let action = if node.adv > node.len {
            MdpAction::Override
        } else {
            MdpAction::Adopt
        };
        (node.adv >= cap || node.len >= cap).then_some(action)
    }

    fn is_feasible(&self, node: &Node, action: MdpAction) -> bool {
        if let Some(forced) = self.forced(node) {
            return action == forced;
        }
        match action {
            MdpAction::Adopt | MdpAction::Wait => true,
            MdpAction::Override => node.adv > node.len,
            MdpAction::Match(i) => {
                i <= self.max_bribe
                    && node.matched == 0
                    && node.len >= 1
                    && node.adv >= node.len
                    && (!self.match_needs_pool_latest || node.latest_pool)
            }
        }
    }

    fn actions(&self, node: &Node) -> Vec<MdpAction> {
        if let Some(forced) = self.forced(node) {
            return vec![forced];
        }
        let mut out = vec![MdpAction::Adopt, MdpAction::Wait];
        if node.adv > node.len {
            out.push(MdpAction::Override);
        }
        out.extend(
            (0..=self.max_bribe)
                .map(MdpAction::Match)
                .filter(|&a| self.is_feasible(node, a)),
        );
        out
    }

    /// Applies a feasible action, returning the post-decision node.
    fn apply(&self, node: &Node, action: MdpAction) -> (Node, Payoff) {
        match action {
            MdpAction::Adopt => (
                Node::EMPTY,
                Payoff {
                    net: 0.0,
                    settled: node.len as u32,
                },
            ),
            MdpAction::Override => (
                Node {
                    adv: node.adv - node.len - 1,
                    ..Node::EMPTY
                },
                Payoff {
                    net: node.len as f64 + 1.0,
                    settled: node.len as u32 + 1,
                },
            ),
            MdpAction::Wait => (
                Node {
                    latest_pool: false,
                    ..*node
                },
                Payoff::default(),
            ),
            MdpAction::Match(i) => (
                Node {
                    matched: i as u8 + 1,
                    latest_pool: false,
                    ..*node
                },
                Payoff::default(),
            ),
        }
    }

    /// Nature's move from a post-decision node: who mines the next block.
    /// Outcomes are `(probability, next decision node, payoff)` with
    /// interchangeable outcomes merged.
    fn outcomes(&self, post: &Node) -> Vec<(f64, Node, Payoff)> {
        let mut out: Vec<(f64, Node, Payoff)> = Vec::with_capacity(self.miners.len() + 1);
        let mut push = |p: f64, node: Node, pay: Payoff| {
            let node = self.canonical(node);
            match out.iter_mut().find(|(_, n, q)| *n == node && *q == pay) {
                Some(entry) => entry.0 += p,
                None => out.push((p, node, pay)),
            }
        };
        push(
            self.alpha,
            Node {
                adv: post.adv + 1,
                latest_pool: false,
                ..*post
            },
            Payoff::default(),
        );
        for m in &self.miners {
            let switches =
                post.matched > 0 && m.slot.is_some_and(|s| post.counts[s] < post.matched);
            if switches {
                // The block lands on the adversarial prefix and takes the bribe.
                let level = (post.matched - 1) as f64;
                let mut counts = [0u8; MAX_OTHER_POOLS];
                counts[m.slot.unwrap()] = 1;
                push(
                    m.share,
                    Node {
                        counts,
                        len: 1,
                        adv: post.adv - post.len,
                        matched: 0,
                        latest_pool: true,
                    },
                    Payoff {
                        net: post.len as f64 - level - self.epsilon,
                        settled: post.len as u32,
                    },
                );
            } else {
                let mut counts = post.counts;
                if let Some(s) = m.slot {
                    counts[s] = (counts[s] + 1).min(self.saturation());
                }
                push(
                    m.share,
                    Node {
                        counts,
                        len: post.len + 1,
                        adv: post.adv,
                        matched: 0,
                        latest_pool: true,
                    },
                    Payoff::default(),
                );
            }
        }
        out
    }

    fn to_state(&self, node: &Node, pools: usize, adversary: usize) -> MdpState {
        let mut fork_blocks = vec![0u32; pools - 1];
        for m in &self.miners {
            if let Some(s) = m.slot {
                let idx = if m.pool > adversary {
                    m.pool - 1
                } else {
                    m.pool
                };
                fork_blocks[idx] = node.counts[s] as u32;
            }
        }
        MdpState {
            fork_blocks,
            fork_len: node.len as u32,
            adversary_len: node.adv as u32,
            latest: if node.latest_pool {
                Latest::Pool
            } else {
                Latest::Adversary
            },
            match_active: node.matched > 0,
            bribe_level: node.matched.saturating_sub(1) as u32,
        }
    }

    fn node_of(&self, state: &MdpState, adversary: usize) -> Result<Node> {
        let bad = || Error::Validation(format!("state {state} is not representable"));
        let mut counts = [0u8; MAX_OTHER_POOLS];
        for m in &self.miners {
            if let Some(s) = m.slot {
                let idx = if m.pool > adversary {
                    m.pool - 1
                } else {
                    m.pool
                };
                let c = *state.fork_blocks.get(idx).ok_or_else(bad)?;
                counts[s] = c.min(self.saturation() as u32) as u8;
            }
        }
        ensure(
            state.fork_len <= MAX_FORK_CAP && state.adversary_len <= MAX_FORK_CAP,
            bad,
        )?;
        Ok(self.canonical(Node {
            counts,
            len: state.fork_len as u8,
            adv: state.adversary_len as u8,
            matched: if state.match_active {
                state.bribe_level as u8 + 1
            } else {
                0
            },
            latest_pool: state.latest == Latest::Pool,
        }))
    }
}

/// An enumerated race model ready for solving.
pub struct MdpModel {
    dynamics: Dynamics,
    pool_count: usize,
    adversary: usize,
    /// Decision nodes, packed.
    states: Vec<u64>,
    state_index: HashMap<u64, u32>,
    // Actions per decision node (CSR).
    action_start: Vec<u32>,
    action_kind: Vec<MdpAction>,
    action_post: Vec<u32>,
    action_net: Vec<f64>,
    action_settled: Vec<u32>,
    // Nature outcomes per post-decision node (CSR).
    posts: Vec<u64>,
    outcome_start: Vec<u32>,
    outcome_prob: Vec<f64>,
    outcome_next: Vec<u32>,
    outcome_net: Vec<f64>,
    outcome_settled: Vec<u32>,
}

impl fmt::Debug for MdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdpModel")
            .field("states", &self.states.len())
            .field("post_states", &self.posts.len())
            .field("actions", &self.action_kind.len())
            .field("outcomes", &self.outcome_prob.len())
            .finish()
    }
}

/// Enumerates every decision state reachable from an empty race.
pub fn build_mdp(pools: &PoolSet, params: &AttackParams, options: &MdpOptions) -> Result<MdpModel> {
    let dynamics = Dynamics::new(pools, params, options)?;
    let mut states: Vec<u64> = Vec::new();
    let mut state_index: HashMap<u64, u32> = HashMap::new();
    let mut posts: Vec<u64> = vec![Node::EMPTY.pack()];
    let mut post_index: HashMap<u64, u32> = HashMap::from([(Node::EMPTY.pack(), 0)]);
    let mut model = MdpModel {
        dynamics: dynamics.clone(),
        pool_count: pools.len(),
        adversary: pools.adversary(),
        states: Vec::new(),
        state_index: HashMap::new(),
        action_start: vec![0],
        action_kind: Vec::new(),
        action_post: Vec::new(),
        action_net: Vec::new(),
        action_settled: Vec::new(),
        posts: Vec::new(),
        outcome_start: vec![0],
        outcome_prob: Vec::new(),
        outcome_next: Vec::new(),
        outcome_net: Vec::new(),
        outcome_settled: Vec::new(),
    };
    let intern = |list: &mut Vec<u64>, index: &mut HashMap<u64, u32>, key: u64| -> Result<u32> {
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        ensure(list.len() < options.state_ceiling, || Error::Capacity {
            what: "race model".into(),
            count: list.len() + 1,
            ceiling: options.state_ceiling,
        })?;
        let i = list.len() as u32;
        list.push(key);
        index.insert(key, i);
        Ok(i)
    };
    // Post-decision nodes and decision nodes are expanded alternately; both
    // queues are the growing lists themselves.
    let (mut next_post, mut next_state) = (0usize, 0usize);
    while next_post < posts.len() || next_state < states.len() {
        while next_post < posts.len() {
            let post = Node::unpack(posts[next_post]);
            for (p, node, pay) in dynamics.outcomes(&post) {
                let idx = intern(&mut states, &mut state_index, node.pack())?;
                model.outcome_prob.push(p);
                model.outcome_next.push(idx);
                model.outcome_net.push(pay.net);
                model.outcome_settled.push(pay.settled);
            }
            model.outcome_start.push(model.outcome_prob.len() as u32);
            next_post += 1;
        }
        while next_state < states.len() {
            let node = Node::unpack(states[next_state]);
            for action in dynamics.actions(&node) {
                let (post, pay) = dynamics.apply(&node, action);
                let idx = intern(&mut posts, &mut post_index, post.pack())?;
                model.action_kind.push(action);
                model.action_post.push(idx);
                model.action_net.push(pay.net);
                model.action_settled.push(pay.settled);
            }
            model.action_start.push(model.action_kind.len() as u32);
            next_state += 1;
        }
    }
    model.states = states;
    model.state_index = state_index;
    model.posts = posts;
    Ok(model)
}

impl MdpModel {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn post_state_count(&self) -> usize {
        self.posts.len()
    }

    pub fn state(&self, index: usize) -> MdpState {
        self.dynamics.to_state(
            &Node::unpack(self.states[index]),
            self.pool_count,
            self.adversary,
        )
    }

    pub fn index_of(&self, state: &MdpState) -> Option<usize> {
        let node = self.dynamics.node_of(state, self.adversary).ok()?;
        self.state_index.get(&node.pack()).map(|&i| i as usize)
    }

    pub fn feasible_actions(&self, index: usize) -> &[MdpAction] {
        let (lo, hi) = self.action_range(index);
        &self.action_kind[lo..hi]
    }

    fn action_range(&self, s: usize) -> (usize, usize) {
        (
            self.action_start[s] as usize,
            self.action_start[s + 1] as usize,
        )
    }

    fn outcome_range(&self, p: usize) -> (usize, usize) {
        (
            self.outcome_start[p] as usize,
            self.outcome_start[p + 1] as usize,
        )
    }

    /// Best action value per decision state for the transformed reward.
    fn decide(&self, rho: f64, post_values: &[f64], out: &mut [f64], choice: Option<&mut [u32]>) {
        let body = |s: usize| {
            let (lo, hi) = self.action_range(s);
            let mut best = f64::NEG_INFINITY;
            let mut arg = lo;
            for k in lo..hi {
                let v = self.action_net[k] - rho * self.action_settled[k] as f64
                    + post_values[self.action_post[k] as usize];
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            (best, arg as u32)
        };
        match choice {
            Some(choice) => out
                .par_iter_mut()
                .zip(choice.par_iter_mut())
                .enumerate()
                .for_each(|(s, (v, c))| (*v, *c) = body(s)),
            None => out
                .par_iter_mut()
                .enumerate()
                .for_each(|(s, v)| *v = body(s).0),
        }
    }

    fn expect(&self, rho: f64, state_values: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(p, w)| {
            let (lo, hi) = self.outcome_range(p);
            *w = (lo..hi)
                .map(|k| {
                    self.outcome_prob[k]
                        * (self.outcome_net[k] - rho * self.outcome_settled[k] as f64
                            + state_values[self.outcome_next[k] as usize])
                })
                .sum();
        });
    }
}

/// Convergence settings for [`solve_reward_share`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Width of the final bracket on the reward share.
    pub tol: f64,
    /// Value-iteration sweeps allowed per bisection step.
    pub max_sweeps: usize,
    /// Aperiodicity weight: each sweep moves values this far toward the
    /// Bellman update.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-5,
            max_sweeps: 100_000,
            damping: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub reward_share: f64,
    /// Final bracket `[lo, hi]` containing the optimal share.
    pub bracket: (f64, f64),
    /// Optimal action per decision state, indexed like the model.
    #[serde(skip)]
    pub policy: Vec<MdpAction>,
    /// Value-iteration sweeps over all bisection steps.
    pub iterations: usize,
    /// Span of the last gain bracket.
    pub residual: f64,
    pub state_count: usize,
}

impl SolveResult {
    pub fn action(&self, model: &MdpModel, state: &MdpState) -> Option<MdpAction> {
        model.index_of(state).map(|i| self.policy[i])
    }

    /// `(state, action)` pairs in model order.
    pub fn policy_entries<'a>(
        &'a self,
        model: &'a MdpModel,
    ) -> impl Iterator<Item = (MdpState, MdpAction)> + 'a {
        self.policy
            .iter()
            .enumerate()
            .map(move |(i, &a)| (model.state(i), a))
    }
}

/// Outcome of the inner average-reward solve at a fixed ratio.
struct GainBounds {
    lo: f64,
    hi: f64,
    sweeps: usize,
}

fn gain_bounds(
    model: &MdpModel,
    rho: f64,
    post_values: &mut Vec<f64>,
    state_values: &mut [f64],
    scratch: &mut Vec<f64>,
    opts: &SolverOptions,
    precision: f64,
) -> Result<GainBounds> {
    for sweep in 1..=opts.max_sweeps {
        model.decide(rho, post_values, state_values, None);
        model.expect(rho, state_values, scratch);
        let (lo, hi) = scratch
            .par_iter()
            .zip(post_values.par_iter())
            .map(|(new, old)| {
                let d = new - old;
                (d, d)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        let anchor = scratch[0];
        let tau = opts.damping;
        post_values
            .par_iter_mut()
            .zip(scratch.par_iter())
            .for_each(|(w, &new)| *w = (1.0 - tau) * *w + tau * (new - anchor));
        if lo > 0.0 || hi < 0.0 || hi - lo < precision {
            return Ok(GainBounds {
                lo,
                hi,
                sweeps: sweep,
            });
        }
    }
    Err(Error::Convergence {
        what: format!("average-reward value iteration at ratio {rho}"),
        iterations: opts.max_sweeps,
        residual: f64::NAN,
    })
}

/// Maximizes the long-run share of settled blocks credited to the
/// adversary, net of bribes.
pub fn solve_reward_share(model: &MdpModel, opts: &SolverOptions) -> Result<SolveResult> {
    ensure(opts.tol > 0.0, || {
        Error::Validation("tolerance must be positive".into())
    })?;
    ensure(opts.damping > 0.0 && opts.damping <= 1.0, || {
        Error::Validation("damping must lie in (0, 1]".into())
    })?;
    let mut post_values = vec![0.0; model.posts.len()];
    let mut state_values = vec![0.0; model.states.len()];
    let mut scratch = vec![0.0; model.posts.len()];
    // Settled blocks per mined block never exceed one, so a gain g at ratio
    // ρ puts the optimum above ρ + g when g > 0 and below it when g < 0.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    let mut residual = f64::NAN;
    while hi - lo > opts.tol {
        let rho = 0.5 * (lo + hi);
        let bounds = gain_bounds(
            model,
            rho,
            &mut post_values,
            &mut state_values,
            &mut scratch,
            opts,
            0.25 * opts.tol,
        )?;
        iterations += bounds.sweeps;
        residual = bounds.hi - bounds.lo;
        if bounds.lo > 0.0 {
            lo = lo.max(rho + bounds.lo);
        } else if bounds.hi < 0.0 {
            hi = hi.min(rho + bounds.hi);
        } else {
            // The gain is zero to within the sweep precision.
            (lo, hi) = (rho, rho);
        }
    }
    let reward_share = 0.5 * (lo + hi);
    let mut policy_index = vec![0u32; model.states.len()];
    model.decide(
        reward_share,
        &post_values,
        &mut state_values,
        Some(&mut policy_index),
    );
    let policy = policy_index
        .into_iter()
        .map(|k| model.action_kind[k as usize])
        .collect();
    Ok(SolveResult {
        reward_share,
        bracket: (lo, hi),
        policy,
        iterations,
        residual,
        state_count: model.states.len(),
    })
}

/// Empirical statistics of a policy rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutStats {
    pub reward_share: f64,
    pub blocks_mined: u64,
    pub blocks_settled: u64,
    pub adversary_blocks: u64,
    pub bribes_paid: f64,
}

/// Plays `policy` against the race for `horizon` mined blocks.
pub fn policy_rollout(
    model: &MdpModel,
    policy: impl Fn(&MdpState) -> Option<MdpAction>,
    seed: u64,
    horizon: u64,
) -> Result<RolloutStats> {
    ensure(horizon > 0, || {
        Error::Validation("horizon must be positive".into())
    })?;
    let dynamics = &model.dynamics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut post = Node::EMPTY;
    let (mut settled, mut adv_blocks, mut bribes) = (0u64, 0u64, 0.0f64);
    for _ in 0..horizon {
        let outcomes = dynamics.outcomes(&post);
        let mut u: f64 = rng.gen();
        let mut pick = outcomes.len() - 1;
        for (k, (p, _, _)) in outcomes.iter().enumerate() {
            if u < *p {
                pick = k;
                break;
            }
            u -= p;
        }
        let (_, node, pay) = outcomes[pick];
        settled += pay.settled as u64;
        if pay.settled > 0 {
            adv_blocks += pay.settled as u64;
            bribes += pay.settled as f64 - pay.net;
        }
        let state = dynamics.to_state(&node, model.pool_count, model.adversary);
        let action = policy(&state)
            .ok_or_else(|| Error::Validation(format!("policy has no action for state {state}")))?;
        ensure(dynamics.is_feasible(&node, action), || {
            Error::Validation(format!("action {action} is infeasible in state {state}"))
        })?;
        let (next, pay) = dynamics.apply(&node, action);
        settled += pay.settled as u64;
        if action == MdpAction::Override {
            adv_blocks += pay.settled as u64;
        }
        post = next;
    }
    let net = adv_blocks as f64 - bribes;
    Ok(RolloutStats {
        reward_share: if settled > 0 {
            net / settled as f64
        } else {
            0.0
        },
        blocks_mined: horizon,
        blocks_settled: settled,
        adversary_blocks: adv_blocks,
        bribes_paid: bribes,
    })
}

/// One mined block under a fixed policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkStep {
    /// Blocks that became canonical.
    pub settled: u32,
    /// Adversarial blocks settled minus bribes paid.
    pub revenue: f64,
}

/// Plays a solved policy one mined block at a time.
pub struct PolicyWalker<'a> {
    model: &'a MdpModel,
    /// Chosen action position per decision state.
    chosen: Vec<u32>,
    post: usize,
}

impl<'a> PolicyWalker<'a> {
    pub fn new(model: &'a MdpModel, policy: &[MdpAction]) -> Result<Self> {
        ensure(policy.len() == model.state_count(), || {
            Error::Validation(format!(
                "policy covers {} states, model has {}",
                policy.len(),
                model.state_count()
            ))
        })?;
        let chosen = policy
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                let (lo, hi) = model.action_range(s);
                (lo..hi)
                    .find(|&k| model.action_kind[k] == a)
                    .map(|k| k as u32)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "action {a} is infeasible in state {}",
                            model.state(s)
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        Ok(PolicyWalker {
            model,
            chosen,
            post: 0,
        })
    }

    /// Advances by one mined block; `u` is uniform on `[0, 1)`.
    pub fn step(&mut self, mut u: f64) -> WalkStep {
        let m = self.model;
        let (lo, hi) = m.outcome_range(self.post);
        let mut pick = hi - 1;
        for k in lo..hi {
            if u < m.outcome_prob[k] {
                pick = k;
                break;
            }
            u -= m.outcome_prob[k];
        }
        let k = self.chosen[m.outcome_next[pick] as usize] as usize;
        self.post = m.action_post[k] as usize;
        WalkStep {
            settled: m.outcome_settled[pick] + m.action_settled[k],
            revenue: m.outcome_net[pick] + m.action_net[k],
        }
    }

    /// Mined blocks not yet settled or orphaned.
    pub fn pending(&self) -> u32 {
        let node = Node::unpack(self.model.posts[self.post]);
        node.adv as u32 + node.len as u32
    }
}

/// Publishes every adversarial block at once and accepts every other block.
pub fn honest_policy(state: &MdpState) -> Option<MdpAction> {
    Some(if state.adversary_len > state.fork_len {
        MdpAction::Override
    } else {
        MdpAction::Adopt
    })
}

/// Builds the model and solves it in one call.
pub fn optimal_reward_share(
    pools: &PoolSet,
    params: &AttackParams,
    options: &MdpOptions,
    solver: &SolverOptions,
) -> Result<(MdpModel, SolveResult)> {
    let model = build_mdp(pools, params, options)?;
    let result = solve_reward_share(&model, solver)?;
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(alpha: f64, petty: &[f64], eps: f64, max_bribe: u32, cap: u32) -> f64 {
        let pools = PoolSet::from_shares(alpha, petty).unwrap();
        let params = AttackParams::new(eps).unwrap().with_max_bribe(max_bribe);
        let (_, r) = optimal_reward_share(
            &pools,
            &params,
            &MdpOptions::default().with_fork_cap(cap),
            &SolverOptions::default(),
        )
        .unwrap();
        r.reward_share
    }

    #[test]
    fn pack_round_trip() {
        let node = Node {
            counts: [1, 2, 0, 3, 15, 0, 0, 1, 2],
            len: 63,
            adv: 17,
            matched: 3,
            latest_pool: true,
        };
        assert_eq!(Node::unpack(node.pack()), node);
    }

    #[test]
    fn tiny_adversary_earns_nothing_extra() {
        let rho = solve(1e-4, &[0.5, 0.4999], 0.0, 1, 2);
        assert!((0.0..1e-3).contains(&rho), "rho={rho}");
    }

    #[test]
    fn never_below_honest_share() {
        for &a in &[0.1, 0.25, 0.35] {
            let rest = 1.0 - a;
            let rho = solve(a, &[rest * 0.6, rest * 0.4], 0.1, 1, 4);
            assert!(rho >= a - 1e-4, "a={a} rho={rho}");
        }
    }

    #[test]
    fn honest_rollout_matches_share() {
        let pools = PoolSet::from_shares(0.3, &[0.4, 0.3]).unwrap();
        let model = build_mdp(
            &pools,
            &AttackParams::new(0.0).unwrap(),
            &MdpOptions::default().with_fork_cap(3),
        )
        .unwrap();
        let stats = policy_rollout(&model, honest_policy, 9, 200_000).unwrap();
        assert!((stats.reward_share - 0.3).abs() < 0.005, "{stats:?}");
        assert!(stats.blocks_settled <= stats.blocks_mined);
    }

    #[test]
    fn rollout_rejects_missing_actions() {
        let pools = PoolSet::from_shares(0.3, &[0.7]).unwrap();
        let model = build_mdp(
            &pools,
            &AttackParams::new(0.0).unwrap(),
            &MdpOptions::default().with_fork_cap(2),
        )
        .unwrap();
        let err = policy_rollout(&model, |_| None, 1, 10).unwrap_err();
        assert!(err.to_string().contains("no action for state"));
    }

    #[test]
    fn capacity_ceiling() {
        let pools = PoolSet::from_shares(0.3, &[0.3, 0.2, 0.2]).unwrap();
        let options = MdpOptions {
            state_ceiling: 10,
            ..MdpOptions::default()
        };
        assert!(matches!(
            build_mdp(&pools, &AttackParams::new(0.0).unwrap(), &options),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = PoolSet::from_shares(1.0, &[]).unwrap();
        let params = AttackParams::new(0.0).unwrap();
        assert!(build_mdp(&one, &params, &MdpOptions::default()).is_err());
        let two = PoolSet::from_shares(0.4, &[0.6]).unwrap();
        assert!(build_mdp(&two, &params, &MdpOptions::default().with_fork_cap(1)).is_err());
    }
}
