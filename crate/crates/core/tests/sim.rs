use powplay_core::bribery_chain::{bribery_reward_share, undercut_reward_share, TargetPartition};
use powplay_core::distraction::{scenario_rates, DistractionPartition, PuzzleChoice};
use powplay_core::model::{AttackParams, Pool, PoolSet};
use powplay_core::selfish_analytic::selfish_reward_share;
use powplay_core::sim::*;

fn config(pools: PoolSet, eps: f64, strategy: Strategy, draws: u64) -> SimConfig {
    SimConfig::new(
        pools,
        AttackParams::new(eps).unwrap(),
        strategy,
        Horizon::Blocks(draws),
    )
}

#[test]
fn small_configs_agree_with_closed_forms() {
    let pools = PoolSet::from_shares(0.3, &[0.2, 0.25, 0.25]).unwrap();
    let part = TargetPartition::new(&pools, vec![1]).unwrap();
    let targets = Some(vec![pools.pools()[1].name.clone()]);
    let beta = pools.residual_centralization_factor(0).unwrap();
    let cases = [
        (
            Strategy::PiSelfish,
            selfish_reward_share(0.3, beta, 0.0).unwrap(),
        ),
        (
            Strategy::Bribery {
                targets: targets.clone(),
            },
            bribery_reward_share(0.3, &part, 0.0).unwrap(),
        ),
        (
            Strategy::Undercut { targets },
            undercut_reward_share(0.3, &part, 0.0).unwrap(),
        ),
    ];
    for (strategy, exact) in cases {
        let label = strategy.to_string();
        let stats = simulate(&config(pools.clone(), 0.0, strategy, 2_000_000)).unwrap();
        assert!(
            (stats.adversary_reward_share - exact).abs() < 0.005,
            "{label}: {} vs {exact}",
            stats.adversary_reward_share
        );
    }
}

#[test]
fn replicas_do_not_depend_on_thread_count() {
    let pools = PoolSet::from_shares(0.3, &[0.2, 0.25, 0.25]).unwrap();
    let cfg = config(pools, 0.01, Strategy::PiSelfish, 50_000);
    let shares = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_replicas(&cfg, 6).unwrap())
            .into_iter()
            .map(|s| s.adversary_reward_share)
            .collect::<Vec<_>>()
    };
    assert_eq!(shares(1), shares(4));
}

#[test]
fn distraction_occupancy_matches_scenario_rates() {
    let pools = PoolSet::new(
        vec![
            Pool::new("A", 0.4),
            Pool::new("deciding", 0.1),
            Pool::new("compliant", 0.3),
            Pool::honest("bitcoin-only", 0.2),
        ],
        0,
    )
    .unwrap();
    let n = 1_000_000u64;
    let strategy = Strategy::Distraction {
        d_ratio: 5.0,
        br2: 0.04,
    };
    let stats = simulate(&config(pools, 0.02, strategy, n)).unwrap();
    let part = DistractionPartition::new(0.4, 0.1, 0.3, 0.2).unwrap();
    let s = scenario_rates(&part, 5.0, PuzzleChoice::MiniPow).unwrap();
    for (label, want) in [("s0", s.p0), ("s1", s.p1), ("s2", s.p2)] {
        let k = stats.state_labels.iter().position(|l| l == label).unwrap();
        let got = stats.state_occupancy[k];
        // Consecutive draws are correlated; allow for a modest variance
        // inflation over the binomial standard error.
        let se = 2.0 * (want * (1.0 - want) / n as f64).sqrt();
        assert!((got - want).abs() <= 3.0 * se, "{label}: {got} vs {want}");
    }
}

#[test]
fn active_power_removes_orphan_credit() {
    let pools = PoolSet::from_shares(0.35, &[0.3, 0.2, 0.15]).unwrap();
    let base = config(pools, 0.0, Strategy::PiSelfish, 0).with_epoch_length(500);
    let run = |mode| {
        let mut cfg = base.clone().with_dam_mode(mode);
        cfg.horizon = Horizon::Epochs(40);
        simulate(&cfg).unwrap()
    };
    let canonical = run(DamMode::CanonicalOnly);
    let active = run(DamMode::ActivePower);
    assert!(canonical.orphan_count > 0);
    assert!(active.profit_rate < canonical.profit_rate);
    assert!(active.profit_rate <= 0.35 + 0.01, "{}", active.profit_rate);
}

#[test]
fn honest_mining_earns_its_share_per_unit_time() {
    let pools = PoolSet::from_shares(0.25, &[0.25, 0.5]).unwrap();
    let mut cfg = config(pools, 0.0, Strategy::Honest, 0).with_epoch_length(1000);
    cfg.horizon = Horizon::Epochs(20);
    let stats = simulate(&cfg).unwrap();
    assert_eq!(stats.orphan_count, 0);
    assert!((stats.profit_rate - 0.25).abs() < 0.01);
    assert_eq!(stats.epoch_durations.len(), 20);
}

#[test]
fn config_file_round_trip() {
    let text = r#"{
        "pools": {"adversary": "A", "pools": [{"name": "A", "share": 0.3}, {"name": "B", "share": 0.7}]},
        "strategy": {"kind": "pi_selfish"},
        "horizon": {"blocks": 1000}
    }"#;
    let cfg = SimConfig::from_json_str(text).unwrap();
    assert_eq!(cfg.seed, DEFAULT_SEED);
    assert!(SimConfig::from_json_str(&text.replace("pi_selfish", "bogus")).is_err());
}

#[test]
fn trajectory_needs_epoch_horizon() {
    let pools = PoolSet::from_shares(0.3, &[0.7]).unwrap();
    let cfg = config(pools, 0.0, Strategy::PiSelfish, 100);
    assert!(revenue_advantage_trajectory(&cfg, TrajectoryMethod::Expected).is_err());
}
