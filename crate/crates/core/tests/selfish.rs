mod common;

use powplay_core::model::{AttackParams, EpochModel, PoolSet};
use powplay_core::selfish_analytic::*;
use proptest::prelude::*;

/// States 00, 10, 20, 11 of the withholding strategy, written out by hand.
fn strategy_matrix(a: f64) -> Vec<Vec<f64>> {
    let b = 1.0 - a;
    vec![
        vec![b, a, 0.0, 0.0],
        vec![0.0, 0.0, a, b],
        vec![b, 0.0, a, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
    ]
}

#[test]
fn state_probabilities_solve_the_chain() {
    for a in [0.05, 0.2, 0.29, 0.4, 0.49] {
        let dense = common::stationary_dense(&strategy_matrix(a));
        let p = selfish_state_probs(a).unwrap();
        for (got, want) in [p.p00, p.p10, p.p20, p.p11].iter().zip(&dense) {
            assert!((got - want).abs() < 1e-12, "alpha {a}: {got} vs {want}");
        }
    }
}

#[test]
fn profit_scales_with_value_rate() {
    let unit = selfish_profit(0.3, 0.1, 0.0, &EpochModel::default()).unwrap();
    let doubled = EpochModel::new(2016, 1.0, 2.0).unwrap();
    let scaled = selfish_profit(0.3, 0.1, 0.0, &doubled).unwrap();
    assert!((scaled - 2.0 * unit).abs() < 1e-12);
}

#[test]
fn dominance_verdict_follows_residual_factor() {
    // Residual factor of 0.1 among the petty pools is far below the
    // threshold for a 0.3 adversary.
    let pools = PoolSet::from_shares(0.3, &[0.1; 7]).unwrap();
    let v = is_selfish_dominant(&pools, &AttackParams::new(0.0).unwrap()).unwrap();
    assert!(v.dominant && v.margin > 0.0 && v.warnings.is_empty());

    let pools = PoolSet::from_shares(0.2, &[0.6, 0.2]).unwrap();
    let v = is_selfish_dominant(&pools, &AttackParams::new(0.0).unwrap()).unwrap();
    assert!(!v.dominant);
    assert_eq!(v.warnings.len(), 1);
}

#[test]
fn largest_pool_corollary() {
    assert!(corollary_largest(0.3, 0.2, 0.0).unwrap());
    assert!(!corollary_largest(0.15, 0.15, 0.1).unwrap());
    assert!(corollary_largest(0.1, 0.2, 0.0).is_err());
}

#[test]
fn rejects_out_of_range_shares() {
    assert!(selfish_state_probs(0.0).is_err());
    assert!(selfish_dominance_threshold(1.0, 0.0).is_err());
    assert!(selfish_reward_share(0.3, 1.2, 0.0).is_err());
}

proptest! {
    #[test]
    fn profit_equals_honest_on_the_boundary(a in 0.05f64..0.49, eps in 0.0f64..0.05) {
        let beta = selfish_dominance_threshold(a, eps).unwrap();
        prop_assume!((0.0..1.0).contains(&beta));
        let profit = selfish_reward_share(a, beta, eps).unwrap();
        prop_assert!((profit - a).abs() < 1e-12, "{profit} vs {a}");
    }

    #[test]
    fn profit_falls_as_residual_factor_rises(a in 0.05f64..0.49, b1 in 0.0f64..0.5, gap in 0.01f64..0.4) {
        let lo = selfish_reward_share(a, b1, 0.0).unwrap();
        let hi = selfish_reward_share(a, b1 + gap, 0.0).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn state_probabilities_sum_to_one(a in 0.001f64..0.999) {
        prop_assert!((selfish_state_probs(a).unwrap().total() - 1.0).abs() < 1e-12);
    }
}
