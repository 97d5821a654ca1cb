use powplay_core::distraction::*;
use powplay_core::model::EpochModel;
use proptest::prelude::*;

#[test]
fn worked_partition_probabilities() {
    let part = DistractionPartition::new(0.4, 0.1, 0.3, 0.2).unwrap();
    let s = scenario_rates(&part, 5.0, PuzzleChoice::MiniPow).unwrap();
    assert!((s.rate_s1 - 2.6).abs() < 1e-12);
    assert!((s.p0 + s.p1 + s.p2 - 1.0).abs() < 1e-12);
}

#[test]
fn delta_rises_with_puzzle_reward() {
    let part = DistractionPartition::all_compliant(0.4, 0.1).unwrap();
    let deltas: Vec<f64> = (0..=40)
        .map(|k| expected_return_delta(&part, 5.0, 0.001 * k as f64, 0.02).unwrap())
        .collect();
    assert!(deltas.windows(2).all(|w| w[1] >= w[0]), "{deltas:?}");
    // Small steps in br2 move Δ by a proportionally small amount.
    let steps: Vec<f64> = deltas.windows(2).map(|w| w[1] - w[0]).collect();
    let spread = steps.iter().copied().fold(0.0, f64::max)
        - steps.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-9);
}

#[test]
fn honest_profit_on_the_profit_bound() {
    let epoch = EpochModel::default();
    for (alpha, d) in [(0.4, 10.0), (0.2, 3.0), (0.05, 1.5)] {
        let br = distraction_profit_bound(alpha, d).unwrap();
        let p = distraction_profit(alpha, br, d, 500.0, &epoch).unwrap();
        assert!((p - epoch.honest_profit(alpha)).abs() < 1e-12);
        assert!(
            distraction_profit(alpha, br * 0.9, d, 500.0, &epoch).unwrap()
                > epoch.honest_profit(alpha)
        );
    }
}

#[test]
fn lying_bound_example() {
    assert!((lying_bribe_bound(10.0, 0.02).unwrap() - 0.102).abs() < 1e-12);
}

#[test]
fn frontier_moves_up_with_non_compliant_pools() {
    let grid = default_deciding_grid();
    let base = min_difficulty_ratio(0.4, 0.04, 0.02, &grid, SplitConvention::default()).unwrap();
    let split =
        min_difficulty_ratio(0.4, 0.04, 0.02, &grid, SplitConvention { nc_fraction: 0.5 }).unwrap();
    assert!(base > 2.0 && base <= 5.0, "{base}");
    assert!(split >= base);
}

#[test]
fn outcome_uplift_is_positive_below_the_bound() {
    let part = DistractionPartition::all_compliant(0.3, 0.2).unwrap();
    let d = min_difficulty_ratio(
        0.3,
        0.03,
        0.0,
        &default_deciding_grid(),
        SplitConvention::default(),
    )
    .unwrap();
    let out = distraction_outcome(&part, d, 0.03).unwrap();
    assert!(out.reward_share > 0.3 && out.uplift_percent > 0.0);
}

proptest! {
    #[test]
    fn scenario_probabilities_sum_to_one(
        a in 0.01f64..0.6, i in 0.0f64..1.0, c in 0.0f64..1.0, d in 1.0f64..20.0,
    ) {
        let rest = 1.0 - a;
        let ai = rest * i;
        let ac = (rest - ai) * c;
        let part = DistractionPartition::new(a, ai, ac, rest - ai - ac).unwrap();
        for choice in [PuzzleChoice::MiniPow, PuzzleChoice::Bitcoin] {
            let s = scenario_rates(&part, d, choice).unwrap();
            prop_assert!((s.p0 + s.p1 + s.p2 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lying_bound_exceeds_profit_bound(a in 0.001f64..0.999, d in 1.0f64..100.0, eps in 0.0f64..0.5) {
        prop_assert!(lying_bribe_bound(d, eps).unwrap() > distraction_profit_bound(a, d).unwrap());
    }
}
