//! Pool populations, centralization metrics and the epoch/reward model.
//!
//! Shares are fractions of the total hash rate. A [`PoolSet`] always holds a
//! strictly positive share for every pool, shares summing to one, and exactly
//! one adversarial pool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Tolerance used when checking that shares sum to one.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

/// Bitcoin's difficulty epoch, in canonical blocks.
pub const BITCOIN_EPOCH_LENGTH: u32 = 2016;

/// A single mining pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub name: String,
    pub share: f64,
    /// Normalized per-round mining cost. Every analysis here ignores it.
    #[serde(default)]
    pub cost: f64,
    /// Marks a pool that follows the honest fork choice (first-seen on ties)
    /// instead of the petty-compliant one.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub honest: bool,
}

impl Pool {
    pub fn new(name: impl Into<String>, share: f64) -> Self {
        Pool {
            name: name.into(),
            share,
            cost: 0.0,
            honest: false,
        }
    }

    pub fn honest(name: impl Into<String>, share: f64) -> Self {
        Pool {
            honest: true,
            ..Pool::new(name, share)
        }
    }
}

/// A validated population of pools with one adversary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolSet {
    pools: Vec<Pool>,
    adversary: usize,
}

/// Identifies the adversary in a pool file, by name or by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoolRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Deserialize)]
struct PoolFile {
    pools: Vec<Pool>,
    adversary: PoolRef,
    /// Rescale shares that do not sum to one (published tables are rounded).
    #[serde(default)]
    normalize: bool,
}

impl PoolSet {
    /// Validates and builds a pool set. Shares must already sum to one within
    /// [`SHARE_SUM_TOLERANCE`]; they are then rescaled to sum to one exactly.
    pub fn new(pools: Vec<Pool>, adversary: usize) -> Result<Self> {
        validate_shares(&pools, adversary)?;
        let total: f64 = pools.iter().map(|p| p.share).sum();
        ensure((total - 1.0).abs() <= SHARE_SUM_TOLERANCE, || {
            Error::Validation(format!("shares sum to {total}, expected 1 within 1e-9"))
        })?;
        Ok(Self::rescaled(pools, adversary, total))
    }

    /// Builds a pool set from positive weights that need not sum to one.
    pub fn normalized(pools: Vec<Pool>, adversary: usize) -> Result<Self> {
        validate_shares(&pools, adversary)?;
        let total: f64 = pools.iter().map(|p| p.share).sum();
        Ok(Self::rescaled(pools, adversary, total))
    }

    fn rescaled(mut pools: Vec<Pool>, adversary: usize, total: f64) -> Self {
        for p in &mut pools {
            p.share /= total;
        }
        PoolSet { pools, adversary }
    }

    /// Convenience constructor: adversary share followed by petty-compliant
    /// pool shares, named `A`, `P1`, `P2`, ...
    pub fn from_shares(adversary_share: f64, petty: &[f64]) -> Result<Self> {
        let mut pools = vec![Pool::new("A", adversary_share)];
        pools.extend(
            petty
                .iter()
                .enumerate()
                .map(|(i, &s)| Pool::new(format!("P{}", i + 1), s)),
        );
        Self::new(pools, 0)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        ensure(!text.trim().is_empty(), || {
            Error::Validation("pool file is empty: at least one pool is required".into())
        })?;
        let file: PoolFile = serde_json::from_str(text)?;
        ensure(!file.pools.is_empty(), || {
            Error::Validation("pool list is empty: at least one pool is required".into())
        })?;
        let adversary = match &file.adversary {
            PoolRef::Index(i) => *i,
            PoolRef::Name(name) => file
                .pools
                .iter()
                .position(|p| &p.name == name)
                .ok_or_else(|| Error::Validation(format!("adversary {name:?} is not a pool")))?,
        };
        if file.normalize {
            Self::normalized(file.pools, adversary)
        } else {
            Self::new(file.pools, adversary)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            pools: &'a [Pool],
            adversary: &'a str,
        }
        serde_json::to_string_pretty(&Out {
            pools: &self.pools,
            adversary: &self.pools[self.adversary].name,
        })
        .expect("pool sets always serialize")
    }

    /// The sixteen pools of the January-August 2024 hash-rate snapshot,
    /// unknown miners merged into one pool. The largest pool is the adversary.
    pub fn table1() -> Self {
        Self::from_json_str(include_str!("../data/table1.json")).expect("bundled table is valid")
    }

    /// The nine-pool aggregate of the same snapshot used for MDP runs: the
    /// eight largest pools plus all remaining pools merged into `Others`.
    pub fn realworld() -> Self {
        Self::from_json_str(include_str!("../data/realworld.json")).expect("bundled table is valid")
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn adversary(&self) -> usize {
        self.adversary
    }

    pub fn adversary_share(&self) -> f64 {
        self.pools[self.adversary].share
    }

    pub fn shares(&self) -> Vec<f64> {
        self.pools.iter().map(|p| p.share).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.name == name)
    }

    /// Indices of all non-adversarial pools, in file order.
    pub fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pools.len()).filter(move |&i| i != self.adversary)
    }

    /// Same pools, different adversary.
    pub fn with_adversary(&self, adversary: usize) -> Result<Self> {
        ensure(adversary < self.pools.len(), || {
            Error::Validation(format!("adversary index {adversary} out of range"))
        })?;
        Ok(PoolSet {
            pools: self.pools.clone(),
            adversary,
        })
    }

    pub fn with_adversary_named(&self, name: &str) -> Result<Self> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::Validation(format!("no pool named {name:?}")))?;
        self.with_adversary(i)
    }

    /// Keeps the adversary and the `keep` largest other pools and merges the
    /// rest into a single petty-compliant pool called `Others`.
    pub fn aggregate_tail(&self, keep: usize) -> Self {
        let mut order: Vec<usize> = self.others().collect();
        order.sort_by(|&a, &b| self.pools[b].share.total_cmp(&self.pools[a].share));
        if order.len() <= keep + 1 {
            return self.clone();
        }
        let mut pools = vec![self.pools[self.adversary].clone()];
        pools.extend(order[..keep].iter().map(|&i| self.pools[i].clone()));
        let rest: f64 = order[keep..].iter().map(|&i| self.pools[i].share).sum();
        pools.push(Pool::new("Others", rest));
        let total: f64 = pools.iter().map(|p| p.share).sum();
        Self::rescaled(pools, 0, total)
    }

    /// Σ share² over every pool.
    pub fn centralization_factor(&self) -> f64 {
        self.pools.iter().map(|p| p.share * p.share).sum()
    }

    pub fn residual_centralization_factor(&self, i: usize) -> Result<f64> {
        residual_centralization_factor(&self.shares(), i)
    }

    pub fn pool_advantage(&self, i: usize) -> Result<f64> {
        pool_advantage(&self.shares(), i)
    }

    /// Residual centralization factor with respect to the adversary.
    pub fn adversary_residual(&self) -> f64 {
        self.residual_centralization_factor(self.adversary)
            .expect("a valid pool set has at least one non-adversarial pool")
    }

    /// Largest share among non-adversarial pools, 0 if there are none.
    pub fn max_other_share(&self) -> f64 {
        self.others()
            .map(|i| self.pools[i].share)
            .fold(0.0, f64::max)
    }
}

fn validate_shares(pools: &[Pool], adversary: usize) -> Result<()> {
    ensure(!pools.is_empty(), || {
        Error::Validation("pool list is empty: at least one pool is required".into())
    })?;
    ensure(adversary < pools.len(), || {
        Error::Validation(format!(
            "adversary index {adversary} out of range for {} pools",
            pools.len()
        ))
    })?;
    for p in pools {
        ensure(p.share.is_finite() && p.share > 0.0, || {
            Error::Validation(format!(
                "pool {:?} has non-positive share {}",
                p.name, p.share
            ))
        })?;
        ensure(p.cost.is_finite() && p.cost >= 0.0, || {
            Error::Validation(format!("pool {:?} has invalid cost {}", p.name, p.cost))
        })?;
    }
    ensure(!pools[adversary].honest, || {
        Error::Validation("the adversarial pool cannot be marked honest".into())
    })
}

/// Σ share² over a share vector. Zero entries contribute nothing.
pub fn centralization_factor(shares: &[f64]) -> f64 {
    shares.iter().map(|s| s * s).sum()
}

/// (Σ_{j≠i} share_j²) / (1 − share_i).
///
/// The denominator uses the shares' own total so that unnormalized inputs
/// give the same value as their normalized counterparts.
pub fn residual_centralization_factor(shares: &[f64], i: usize) -> Result<f64> {
    ensure(i < shares.len(), || {
        Error::Validation(format!(
            "pool index {i} out of range for {} pools",
            shares.len()
        ))
    })?;
    let total: f64 = shares.iter().sum();
    let rest = total - shares[i];
    ensure(rest > SHARE_SUM_TOLERANCE * total, || {
        Error::Degenerate(format!(
            "pool {i} holds the entire hash rate; the residual factor is undefined"
        ))
    })?;
    let squares: f64 = shares
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, s)| s * s)
        .sum();
    Ok(squares / (rest * total))
}

/// 1 − residual centralization factor: the chance of winning a bribed
/// one-block fork race.
pub fn pool_advantage(shares: &[f64], i: usize) -> Result<f64> {
    Ok(1.0 - residual_centralization_factor(shares, i)?)
}

/// Maximum lag a petty-compliant pool tolerates behind the longest chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LagBound {
    Finite(u32),
    #[default]
    Infinite,
}

/// Parameters of the petty-compliant environment and the attacker's budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Incentivizing factor: the normalized gain a pool requires before it
    /// deviates from the longest chain.
    pub epsilon: f64,
    pub lag_bound: LagBound,
    /// Highest integer bribe level offered by `Match`.
    pub max_bribe: u32,
    /// Return discount. Frozen at 1 everywhere in this crate.
    pub gamma: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            epsilon: 0.0,
            lag_bound: LagBound::Infinite,
            max_bribe: 1,
            gamma: 1.0,
        }
    }
}

impl AttackParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        let p = AttackParams {
            epsilon,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_bribe(mut self, max_bribe: u32) -> Self {
        self.max_bribe = max_bribe;
        self
    }

    pub fn with_lag_bound(mut self, lag_bound: LagBound) -> Self {
        self.lag_bound = lag_bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.epsilon.is_finite() && self.epsilon >= 0.0, || {
            Error::Validation(format!("epsilon must be >= 0, got {}", self.epsilon))
        })?;
        ensure(self.gamma > 0.0 && self.gamma <= 1.0, || {
            Error::Validation(format!("gamma must lie in (0, 1], got {}", self.gamma))
        })
    }
}

/// Epoch length L, block rate λ and block reward R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochModel {
    pub epoch_length: u32,
    pub block_rate: f64,
    pub block_reward: f64,
}

impl Default for EpochModel {
    fn default() -> Self {
        EpochModel {
            epoch_length: BITCOIN_EPOCH_LENGTH,
            block_rate: 1.0,
            block_reward: 1.0,
        }
    }
}

impl EpochModel {
    pub fn new(epoch_length: u32, block_rate: f64, block_reward: f64) -> Result<Self> {
        let m = EpochModel {
            epoch_length,
            block_rate,
            block_reward,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.epoch_length >= 1, || {
            Error::Validation("epoch length must be at least one block".into())
        })?;
        ensure(self.block_rate.is_finite() && self.block_rate > 0.0, || {
            Error::Validation(format!(
                "block rate must be positive, got {}",
                self.block_rate
            ))
        })?;
        ensure(
            self.block_reward.is_finite() && self.block_reward > 0.0,
            || {
                Error::Validation(format!(
                    "block reward must be positive, got {}",
                    self.block_reward
                ))
            },
        )
    }

    /// λR: the value produced per unit time by the whole network.
    pub fn value_rate(&self) -> f64 {
        self.block_rate * self.block_reward
    }

    /// Per-unit-time profit of honest mining with share `alpha`.
    pub fn honest_profit(&self, alpha: f64) -> f64 {
        alpha * self.value_rate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pool_is_fully_centralized() {
        let set = PoolSet::new(vec![Pool::new("solo", 1.0)], 0).unwrap();
        assert_eq!(set.centralization_factor(), 1.0);
        assert!(matches!(
            set.residual_centralization_factor(0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn equal_pools() {
        let set = PoolSet::from_shares(0.25, &[0.25, 0.25, 0.25]).unwrap();
        assert!((set.centralization_factor() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn residual_factor_of_balanced_tables() {
        let a = PoolSet::from_shares(0.4, &[0.3, 0.3]).unwrap();
        assert!((a.adversary_residual() - 0.3).abs() < 1e-12);
        assert!((a.pool_advantage(0).unwrap() - 0.7).abs() < 1e-12);
        let b = PoolSet::from_shares(0.4, &[0.2, 0.2, 0.2]).unwrap();
        assert!((b.adversary_residual() - 0.2).abs() < 1e-12);
        let two = PoolSet::from_shares(0.5, &[0.5]).unwrap();
        assert!((two.pool_advantage(0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn realworld_residual_factor() {
        let set = PoolSet::realworld();
        assert!((set.adversary_share() - 0.29033).abs() < 1e-9);
        assert!((set.adversary_residual() - 0.1453).abs() < 1e-4);
        assert!((set.pool_advantage(0).unwrap() - 0.8547).abs() < 1e-4);
        // Same value from the sixteen-pool table with its tail merged.
        let merged = PoolSet::table1().aggregate_tail(7);
        assert_eq!(merged.len(), 9);
        assert!((merged.adversary_residual() - 0.1453).abs() < 5e-4);
    }

    #[test]
    fn table1_loads_and_renormalizes() {
        let set = PoolSet::table1();
        assert_eq!(set.len(), 16);
        let total: f64 = set.shares().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(set.pools()[set.adversary()].name, "Foundry USA");
    }

    #[test]
    fn rejects_bad_pool_sets() {
        assert!(PoolSet::new(vec![], 0).is_err());
        assert!(PoolSet::from_shares(0.5, &[0.4]).is_err());
        assert!(PoolSet::from_shares(0.5, &[0.5, 0.0]).is_err());
        assert!(PoolSet::new(vec![Pool::new("a", 1.0)], 3).is_err());
        let err = PoolSet::from_json_str(r#"{"pools": [], "adversary": 0}"#).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn json_adversary_by_name_or_index() {
        let by_name = PoolSet::from_json_str(
            r#"{"pools":[{"name":"x","share":0.6},{"name":"y","share":0.4}],"adversary":"y"}"#,
        )
        .unwrap();
        assert_eq!(by_name.adversary(), 1);
        let by_index = PoolSet::from_json_str(
            r#"{"pools":[{"name":"x","share":0.6},{"name":"y","share":0.4}],"adversary":1}"#,
        )
        .unwrap();
        assert_eq!(by_name, by_index);
        let round_trip = PoolSet::from_json_str(&by_name.to_json()).unwrap();
        assert_eq!(round_trip, by_name);
    }

    #[test]
    fn zero_share_pool_changes_nothing() {
        let shares = [0.4, 0.35, 0.25];
        let padded = [0.4, 0.35, 0.0, 0.25];
        assert_eq!(
            centralization_factor(&shares),
            centralization_factor(&padded)
        );
        let r = residual_centralization_factor(&shares, 0).unwrap();
        let rp = residual_centralization_factor(&padded, 0).unwrap();
        assert!((r - rp).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(AttackParams::new(-0.1).is_err());
        assert!(EpochModel::new(0, 1.0, 1.0).is_err());
        assert!(EpochModel::new(2016, 0.0, 1.0).is_err());
        assert_eq!(EpochModel::default().epoch_length, 2016);
    }
}
