mod common;

use powplay_core::randomwalk::*;
use powplay_core::Error;
use proptest::prelude::*;

#[test]
fn lattice_counts_start_at_one() {
    for d in 1..=5 {
        let (g, f) = common::lattice_counts(d, 14);
        assert_eq!((g[0], f[0]), (1, 1), "d = {d}");
    }
    // Width one leaves a single corridor: one path of each kind per s.
    let (g, _) = common::lattice_counts(1, 14);
    assert!(g.iter().all(|&c| c == 1));
}

#[test]
fn closed_forms_match_enumeration() {
    for d in 1..=5u32 {
        let (g, f) = common::lattice_counts(d as i64, 14);
        for share in [0.02, 0.05, 0.08] {
            let x = share * (1.0 - share);
            let (g_sum, g_weighted, g_tail) = common::partial_series(&g, x);
            let closed = g_series(share, d).unwrap();
            assert!(
                (closed.sum - g_sum).abs() <= 1e-9 + g_tail,
                "G d={d} a={share}"
            );
            assert!((closed.weighted_sum - g_weighted).abs() <= 1e-9 + g_tail);
            let (f_sum, f_weighted, f_tail) = common::partial_series(&f, x);
            assert!(
                (f_series(share, d).unwrap() - f_sum).abs() <= 1e-9 + f_tail,
                "F d={d} a={share}"
            );
            assert!((f_series_weighted(share, d).unwrap() - f_weighted).abs() <= 1e-9 + f_tail);
        }
    }
}

#[test]
fn quarter_share_width_one() {
    let g = g_series(0.25, 1).unwrap();
    assert!((g.sum - 0.5 / 0.40625).abs() < 1e-12);
    let (g_counts, _) = common::lattice_counts(1, 60);
    let sum: f64 = g_counts
        .iter()
        .enumerate()
        .map(|(s, &c)| c as f64 * 0.1875f64.powi(s as i32))
        .sum();
    assert!((g.sum - sum).abs() < 1e-12);
}

#[test]
fn walk_oracle_agrees_with_closed_form() {
    for share in [0.1, 0.2, 1.0 / 3.0, 0.45] {
        for r in 1..=3u32 {
            let exact = prob_never_reach(share, r).unwrap();
            let (p, se) = common::walk_never_reach(share, r as i64, 100_000, 11 + r as u64);
            assert!(
                (p - exact).abs() <= 3.0 * se + 1e-12,
                "share={share} r={r}: {p} vs {exact}"
            );
        }
    }
}

#[test]
fn library_walks_agree_with_closed_form() {
    for share in [0.1, 0.2, 1.0 / 3.0, 0.45] {
        for r in 1..=3u32 {
            let exact = prob_never_reach(share, r).unwrap();
            let est = simulate_never_reach(share, r, 1_000_000, 0xC0FFEE).unwrap();
            assert!(
                (est.probability - exact).abs() <= 3.0 * est.std_error,
                "share={share} r={r}: {} vs {exact}",
                est.probability
            );
        }
    }
}

#[test]
fn never_reach_examples() {
    assert_eq!(prob_never_reach(0.5, 1).unwrap(), 0.0);
    assert!((prob_never_reach(1.0 / 3.0, 1).unwrap() - 0.5).abs() < 1e-12);
    assert!((prob_never_reach(1.0 / 3.0, 2).unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(prob_never_reach(0.7, 2).unwrap(), 0.0);
    assert!(matches!(prob_never_reach(0.3, 0), Err(Error::Domain(_))));
}

#[test]
fn threshold_for_a_two_block_lead() {
    let t = abandon_threshold(2).unwrap();
    assert!((t - 0.4302).abs() < 5e-4, "{t}");
    let (stay, switch) = fork_abandon_returns(0.43, 2).unwrap();
    assert!(stay < switch);
    let (stay, switch) = fork_abandon_returns(0.44, 2).unwrap();
    assert!(stay > switch);
}

#[test]
fn gain_from_staying_falls_with_lead() {
    for share in [0.31, 0.35, 0.4, 0.45, 0.49] {
        let gains: Vec<f64> = (2..=8)
            .map(|d| {
                let (stay, switch) = fork_abandon_returns(share, d).unwrap();
                stay - switch
            })
            .collect();
        assert!(
            gains.windows(2).all(|w| w[1] < w[0]),
            "share {share}: {gains:?}"
        );
    }
}

#[test]
fn longer_leads_have_no_interior_threshold() {
    for d in 3..=8 {
        assert!(
            matches!(abandon_threshold(d), Err(Error::Convergence { .. })),
            "d = {d}"
        );
    }
}

#[test]
fn vanishing_share_earns_nothing() {
    let (stay, switch) = fork_abandon_returns(1e-6, 3).unwrap();
    assert!(stay.abs() < 1e-5 && switch.abs() < 1e-5);
}

proptest! {
    #[test]
    fn hitting_probabilities_sum_to_one(share in 0.001f64..0.499, d in 1u32..12) {
        let (lower, upper) = hitting_probabilities(share, d).unwrap();
        prop_assert!((lower + upper - 1.0).abs() < 1e-9);
        prop_assert!(lower >= 0.0 && upper >= 0.0);
    }

    #[test]
    fn never_reach_is_a_probability(share in 0.001f64..0.999, r in 1u32..20) {
        let p = prob_never_reach(share, r).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(prob_never_reach(share, r + 1).unwrap() >= p);
    }
}
