//! Reference configurations for the optimal-race reproductions, with their
//! published reward shares.

use serde::Serialize;

use crate::error::Result;
use crate::model::{AttackParams, PoolSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCase {
    pub label: String,
    pub pools: PoolSet,
    pub epsilon: f64,
    pub expected_reward_share: f64,
}

impl ReferenceCase {
    fn synthetic(alpha: f64, petty: &[f64], epsilon: f64, expected: f64) -> Result<Self> {
        let pools = PoolSet::from_shares(alpha, petty)?;
        let label = petty
            .iter()
            .map(|s| format!("{s}"))
            .collect::<Vec<_>>()
            .join("/");
        Ok(ReferenceCase {
            label,
            pools,
            epsilon,
            expected_reward_share: expected,
        })
    }

    pub fn params(&self) -> Result<AttackParams> {
        AttackParams::new(self.epsilon)
    }
}

/// Adversary 0.4 against four petty-pool layouts, `ε = 0.1`.
pub fn table2() -> Result<Vec<ReferenceCase>> {
    [
        (vec![0.3, 0.3], 0.5448),
        (vec![0.2, 0.2, 0.2], 0.5714),
        (vec![0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05], 0.5955),
        (vec![0.075; 8], 0.5967),
    ]
    .into_iter()
    .map(|(petty, expected)| ReferenceCase::synthetic(0.4, &petty, 0.1, expected))
    .collect()
}

/// Adversary 0.3 against four petty-pool layouts of falling residual
/// centralization, `ε = 0`.
pub fn table3() -> Result<Vec<ReferenceCase>> {
    [
        (vec![0.4, 0.2, 0.1], 0.3534),
        (vec![0.2, 0.2, 0.2, 0.1], 0.3877),
        (vec![0.2, 0.2, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05], 0.4006),
        (vec![0.0875; 8], 0.4112),
    ]
    .into_iter()
    .map(|(petty, expected)| ReferenceCase::synthetic(0.3, &petty, 0.0, expected))
    .collect()
}

/// Five real-world pools as the adversary against the aggregated pool set,
/// `ε = 0`.
pub fn table4() -> Result<Vec<ReferenceCase>> {
    let set = PoolSet::realworld();
    [
        ("Unknown", 0.0794),
        ("F2Pool", 0.1166),
        ("ViaBTC", 0.1306),
        ("AntPool", 0.2980),
        ("Foundry USA", 0.3785),
    ]
    .into_iter()
    .map(|(name, expected)| {
        Ok(ReferenceCase {
            label: name.to_string(),
            pools: set.with_adversary_named(name)?,
            epsilon: 0.0,
            expected_reward_share: expected,
        })
    })
    .collect()
}

/// Tolerance on reproduced reward shares.
pub const REWARD_SHARE_TOLERANCE: f64 = 0.01;
