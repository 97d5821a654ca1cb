//! Analytics, an MDP solver and a Monte Carlo simulator for mining-power
//! destruction attacks on proof-of-work chains: selfish mining against
//! petty-compliant pools, bribery, undercutting and hash-power distraction.

pub mod bribery_chain;
pub mod distraction;
pub mod error;
pub mod mdp;
pub mod model;
pub mod randomwalk;
pub mod reference;
pub mod selfish_analytic;
pub mod sim;

pub use error::{Error, Result};
pub use model::{AttackParams, EpochModel, LagBound, Pool, PoolSet};
