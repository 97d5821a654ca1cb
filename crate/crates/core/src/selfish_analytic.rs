//! Closed-form analysis of the one/two-block withholding strategy.
//!
//! The adversary keeps at most two private blocks. On a single hidden block
//! it waits; if another pool finds a block it publishes and attaches an `ε`
//! bribe to its fork, splitting the petty pools by their pool advantage. A
//! second hidden block is held until the next block of either kind and then
//! published.

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::model::{AttackParams, EpochModel, PoolSet};

/// Share above which a petty pool trailing one-to-two keeps mining its own
/// fork, breaking the strategy's assumptions.
pub const PETTY_SHARE_LIMIT: f64 = 0.4302;

/// Stationary probabilities of the strategy's states `(hidden, rival)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfishStateProbs {
    pub p00: f64,
    pub p10: f64,
    pub p20: f64,
    pub p11: f64,
}

impl SelfishStateProbs {
    pub fn total(&self) -> f64 {
        self.p00 + self.p10 + self.p20 + self.p11
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    ensure(alpha > 0.0 && alpha < 1.0, || {
        Error::Domain(format!("alpha must lie in (0, 1), got {alpha}"))
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    ensure((0.0..1.0).contains(&epsilon), || {
        Error::Domain(format!("epsilon must lie in [0, 1), got {epsilon}"))
    })
}

pub fn selfish_state_probs(alpha: f64) -> Result<SelfishStateProbs> {
    check_alpha(alpha)?;
    let b = 1.0 - alpha;
    let p00 = b / (1.0 + b * b * alpha);
    let p10 = alpha * p00;
    Ok(SelfishStateProbs {
        p00,
        p10,
        p20: alpha / b * p10,
        p11: b * p10,
    })
}

/// Long-run adversarial profit per unit time once difficulty has adjusted
/// to the orphan rate. `beta` is the adversary's residual centralization
/// factor.
///
/// Revenue net of bribes per state visit is
/// `α p20 + 2(1-α) p20 + 2α p11 + (1-α-β)(1-ε) p11` and canonical blocks per
/// visit are `(1-α) p00 + α p20 + 2(1-α) p20 + 2 p11 = (α³ - α² + 1) p00/(1-α)`.
pub fn selfish_profit(alpha: f64, beta: f64, epsilon: f64, epoch: &EpochModel) -> Result<f64> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    ensure((0.0..1.0).contains(&beta), || {
        Error::Domain(format!("beta must lie in [0, 1), got {beta}"))
    })?;
    epoch.validate()?;
    let a = alpha;
    let num = 2.0 * a.powi(4) - 5.0 * a.powi(3)
        + 4.0 * a * a
        + a * (1.0 - a).powi(2) * (1.0 - a - beta) * (1.0 - epsilon);
    Ok(epoch.value_rate() * num / (a.powi(3) - a * a + 1.0))
}

/// Fraction of canonical rewards the adversary keeps, net of bribes.
pub fn selfish_reward_share(alpha: f64, beta: f64, epsilon: f64) -> Result<f64> {
    selfish_profit(alpha, beta, epsilon, &EpochModel::default())
}

/// Largest residual centralization factor at which the strategy still beats
/// honest mining.
pub fn selfish_dominance_threshold(alpha: f64, epsilon: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let b = 1.0 - alpha;
    Ok((alpha - epsilon * b * b) / (b * (1.0 - epsilon)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub dominant: bool,
    /// Threshold minus the adversary's residual factor.
    pub margin: f64,
    pub threshold: f64,
    pub residual_factor: f64,
    /// Set when a petty pool is large enough to void the strategy's
    /// assumptions. The verdict is still computed.
    pub warnings: Vec<String>,
}

pub fn is_selfish_dominant(pools: &PoolSet, params: &AttackParams) -> Result<DominanceVerdict> {
    params.validate()?;
    let threshold = selfish_dominance_threshold(pools.adversary_share(), params.epsilon)?;
    let residual = pools.residual_centralization_factor(pools.adversary())?;
    let warnings = pools
        .others()
        .map(|i| &pools.pools()[i])
        .filter(|p| p.share >= PETTY_SHARE_LIMIT)
        .map(|p| {
            format!(
                "pool {:?} has share {:.4} >= {PETTY_SHARE_LIMIT}; it may keep mining a trailing fork",
                p.name, p.share
            )
        })
        .collect();
    Ok(DominanceVerdict {
        dominant: residual < threshold,
        margin: threshold - residual,
        threshold,
        residual_factor: residual,
        warnings,
    })
}

/// Whether the largest pool (`alpha1`) profits from the strategy against a
/// second pool `alpha2` and any split of the remaining hash rate.
pub fn corollary_largest(alpha1: f64, alpha2: f64, epsilon: f64) -> Result<bool> {
    ensure(alpha1 >= alpha2, || {
        Error::Validation(format!(
            "alpha1 ({alpha1}) must be at least alpha2 ({alpha2})"
        ))
    })?;
    ensure(alpha2 >= 0.0 && alpha1 + alpha2 <= 1.0 + 1e-12, || {
        Error::Validation(format!(
            "shares {alpha1} and {alpha2} exceed the whole network"
        ))
    })?;
    check_alpha(alpha1)?;
    Ok(alpha1 / (1.0 - alpha1) > alpha2 + epsilon * (1.0 - alpha1 - alpha2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pool;

    #[test]
    fn state_probabilities() {
        let p = selfish_state_probs(0.4).unwrap();
        assert!((p.p00 - 0.52448).abs() < 5e-6);
        assert!((p.p10 - 0.20979).abs() < 5e-6);
        assert!((p.p20 - 0.13986).abs() < 5e-6);
        assert!((p.p11 - 0.12587).abs() < 5e-6);
        assert!((p.total() - 1.0).abs() < 1e-12);
        let tiny = selfish_state_probs(1e-9).unwrap();
        assert!((tiny.p00 - 1.0).abs() < 1e-8);
        assert!(selfish_state_probs(1.0).is_err());
    }

    #[test]
    fn probabilities_are_stationary() {
        // Transition rows of the four-state chain, in order 00, 10, 20, 11.
        for &a in &[0.05, 0.2, 0.4, 0.6, 0.9] {
            let b = 1.0 - a;
            let p = selfish_state_probs(a).unwrap();
            let v = [p.p00, p.p10, p.p20, p.p11];
            let t = [
                [b, a, 0.0, 0.0],
                [0.0, 0.0, a, b],
                [b, 0.0, a, 0.0],
                [1.0, 0.0, 0.0, 0.0],
            ];
            for j in 0..4 {
                let next: f64 = (0..4).map(|i| v[i] * t[i][j]).sum();
                assert!((next - v[j]).abs() < 1e-12, "a={a} state {j}");
            }
        }
    }

    #[test]
    fn thresholds() {
        assert!((selfish_dominance_threshold(0.4, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((selfish_dominance_threshold(0.4, 0.1).unwrap() - 0.6741).abs() < 5e-5);
        assert!(selfish_dominance_threshold(0.29033, 0.3).unwrap() > 0.1453);
        assert!(matches!(
            selfish_dominance_threshold(0.4, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn profit_examples() {
        let epoch = EpochModel::default();
        assert!(selfish_profit(0.4, 0.3, 0.1, &epoch).unwrap() > 0.4);
        assert!(selfish_profit(0.29033, 0.1453, 0.0, &epoch).unwrap() > 0.29033);
        for &(a, e) in &[(0.4, 0.1), (0.3, 0.0), (0.2, 0.05)] {
            let t = selfish_dominance_threshold(a, e).unwrap();
            let at = selfish_profit(a, t, e, &epoch).unwrap();
            assert!((at - a).abs() < 1e-9);
        }
        let scaled = EpochModel::new(2016, 2.0, 3.0).unwrap();
        let base = selfish_profit(0.3, 0.2, 0.0, &epoch).unwrap();
        assert!((selfish_profit(0.3, 0.2, 0.0, &scaled).unwrap() - 6.0 * base).abs() < 1e-12);
    }

    #[test]
    fn dominance_on_real_pools() {
        let table = PoolSet::table1();
        let params = AttackParams::new(0.3).unwrap();
        let v = is_selfish_dominant(&table, &params).unwrap();
        assert!(v.dominant && v.warnings.is_empty());
        let second = table.with_adversary_named("AntPool").unwrap();
        assert!(
            is_selfish_dominant(&second, &AttackParams::new(0.0).unwrap())
                .unwrap()
                .dominant
        );
    }

    #[test]
    fn two_pool_network() {
        let params = AttackParams::new(0.0).unwrap();
        for &delta in &[1e-6, 0.01, 0.2] {
            let set = PoolSet::new(
                vec![
                    Pool::new("big", 0.5 + delta),
                    Pool::new("small", 0.5 - delta),
                ],
                0,
            )
            .unwrap();
            let v = is_selfish_dominant(&set, &params).unwrap();
            assert!(v.dominant, "delta={delta}");
            assert_eq!(
                v.warnings.len(),
                usize::from(0.5 - delta >= PETTY_SHARE_LIMIT)
            );
        }
    }

    #[test]
    fn corollary_examples() {
        assert!(corollary_largest(0.3, 0.25, 0.2).unwrap());
        assert!(!corollary_largest(0.1, 0.1, 0.1).unwrap());
        assert!(corollary_largest(0.2, 0.19, 0.0).unwrap());
        assert!(matches!(
            corollary_largest(0.1, 0.2, 0.0),
            Err(Error::Validation(_))
        ));
    }
}
