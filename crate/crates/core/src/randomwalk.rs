//! Lattice-path analytics for two-fork races.
//!
//! A race is a walk on the `(x, y)` grid: a step right with probability
//! `share` (the pool under study finds a block) and a step up with
//! probability `1 - share` (anyone else does). `G_s^d` counts paths to
//! `(s, s + d)` and `F_s^d` paths to `(s + 2, s)` that stay strictly between
//! the lines `y = x - 2` and `y = x + d` until their final step. Every series
//! here is evaluated in closed form in the variable `x = share (1 - share)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, Error, Result};

/// Plain and `s`-weighted sums of a path-count generating function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub sum: f64,
    pub weighted_sum: f64,
}

/// Probability that a walk starting on `y = x` never touches `y = x - r`.
pub fn prob_never_reach(share: f64, r: u32) -> Result<f64> {
    ensure(r >= 1, || {
        Error::Domain("distance r must be at least 1".into())
    })?;
    ensure(share > 0.0 && share < 1.0, || {
        Error::Domain(format!("share must lie in (0, 1), got {share}"))
    })?;
    let ratio = share / (1.0 - share);
    Ok((1.0 - ratio.powi(r as i32)).clamp(0.0, 1.0))
}

fn check_series_domain(share: f64, d: u32) -> Result<()> {
    ensure(d >= 1, || {
        Error::Domain("strip width d must be at least 1".into())
    })?;
    ensure(share > 0.0 && share < 0.5, || {
        Error::Domain(format!(
            "series identities need share in (0, 0.5), got {share}"
        ))
    })
}

/// `Σ G_s^d x^s` and `Σ s G_s^d x^s`.
pub fn g_series(share: f64, d: u32) -> Result<SeriesResult> {
    check_series_domain(share, d)?;
    let a = share;
    let b = 1.0 - a;
    let n = d as i32 + 2;
    let gap = b.powi(n) - a.powi(n);
    let sum = (1.0 - 2.0 * a) / gap;
    let weighted_sum = n as f64 * a * b * (b.powi(n - 1) + a.powi(n - 1)) / (gap * gap)
        - 2.0 * a * b / ((1.0 - 2.0 * a) * gap);
    Ok(SeriesResult { sum, weighted_sum })
}

/// Probability of reaching `y = x + d` before `y = x - 2`, and its
/// derivative with respect to `share`.
fn upper_hit(share: f64, d: u32) -> (f64, f64) {
    let a = share;
    let b = 1.0 - a;
    let n = d as i32 + 2;
    let num = (1.0 - 2.0 * a) * b.powi(n - 2);
    let den = b.powi(n) - a.powi(n);
    let num_prime = -2.0 * b.powi(n - 2) - (n - 2) as f64 * (1.0 - 2.0 * a) * b.powi(n - 3);
    let den_prime = -(n as f64) * (b.powi(n - 1) + a.powi(n - 1));
    (num / den, (num_prime * den - num * den_prime) / (den * den))
}

/// `share² Σ F_s^d x^s` and `share² Σ s F_s^d x^s`: the lower line's hitting
/// mass and its `s`-weighted counterpart. Kept in this scaled form because
/// the unscaled sums lose precision as `share` shrinks.
fn lower_hit_scaled(share: f64, d: u32) -> (f64, f64) {
    let a = share;
    let (h, h_prime) = upper_hit(a, d);
    let mass = 1.0 - h;
    // x d/dx = a(1-a)/(1-2a) d/da, and d/da (mass / a²) · a² = -h' - 2 mass / a.
    let weighted = a * (1.0 - a) / (1.0 - 2.0 * a) * (-h_prime - 2.0 * mass / a);
    (mass, weighted)
}

/// `Σ F_s^d x^s`.
pub fn f_series(share: f64, d: u32) -> Result<f64> {
    check_series_domain(share, d)?;
    Ok(lower_hit_scaled(share, d).0 / (share * share))
}

/// `Σ s F_s^d x^s`.
pub fn f_series_weighted(share: f64, d: u32) -> Result<f64> {
    check_series_domain(share, d)?;
    Ok(lower_hit_scaled(share, d).1 / (share * share))
}

/// Probabilities that a walk from the origin first reaches `y = x - 2`
/// (lower) or `y = x + d` (upper). They sum to one.
pub fn hitting_probabilities(share: f64, d: u32) -> Result<(f64, f64)> {
    let lower = share * share * f_series(share, d)?;
    let upper = g_series(share, d)?.sum * (1.0 - share).powi(d as i32);
    Ok((lower, upper))
}

/// Expected blocks a pool with `share` collects in a race it trails one to
/// two, where the leading fork wins once it is `d` blocks ahead. Returns
/// `(stay, switch)`: the pool keeps mining its own fork, or abandons it for
/// the leader.
pub fn fork_abandon_returns(share: f64, d: u32) -> Result<(f64, f64)> {
    ensure(d >= 2, || {
        Error::Domain(format!("lead d must be at least 2, got {d}"))
    })?;
    check_series_domain(share, d - 1)?;
    let (win_mass, win_weighted) = lower_hit_scaled(share, d - 1);
    let lose = g_series(share, d - 1)?;
    let stay = 3.0 * win_mass + win_weighted;
    let switch =
        2.0 * win_mass + win_weighted + (1.0 - share).powi(d as i32 - 1) * lose.weighted_sum;
    Ok((stay, switch))
}

const THRESHOLD_BRACKET: (f64, f64) = (0.01, 0.49);
const THRESHOLD_TOLERANCE: f64 = 1e-6;

/// Share below which a pool trailing a `d`-lead race prefers to abandon its
/// fork: the root of `stay - switch` on a fixed bracket.
pub fn abandon_threshold(d: u32) -> Result<f64> {
    ensure(d >= 2, || {
        Error::Domain(format!("lead d must be at least 2, got {d}"))
    })?;
    let gain = |a: f64| fork_abandon_returns(a, d).map(|(stay, switch)| stay - switch);
    let (mut lo, mut hi) = THRESHOLD_BRACKET;
    let (g_lo, g_hi) = (gain(lo)?, gain(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Convergence {
            what: format!("abandon threshold for d = {d}: no sign change on (0.01, 0.49)"),
            iterations: 0,
            residual: g_hi.abs().min(g_lo.abs()),
        });
    }
    let mut iterations = 0;
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if gain(mid)?.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    debug_assert!(iterations < 64);
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo estimate of [`prob_never_reach`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub walks: u64,
}

const WALK_STEP_CAP: u32 = 100_000;
const WALK_CHUNK: u64 = 1 << 14;

/// Simulates `walks` races and counts those that never fall `r` below the
/// diagonal. Walks stop once the lead is large enough that the remaining
/// chance of falling back is below 1e-15, or at a step cap whose residual
/// mass is settled by the analytic tail. Deterministic for a given seed and
/// independent of the thread count.
pub fn simulate_never_reach(share: f64, r: u32, walks: u64, seed: u64) -> Result<WalkEstimate> {
    ensure(r >= 1, || {
        Error::Domain("distance r must be at least 1".into())
    })?;
    ensure(share > 0.0 && share < 1.0, || {
        Error::Domain(format!("share must lie in (0, 1), got {share}"))
    })?;
    ensure(walks > 0, || {
        Error::Validation("need at least one walk".into())
    })?;
    let ratio = share / (1.0 - share);
    // Height above the diagonal past which a return is negligible.
    let escape: i64 = if ratio < 1.0 {
        (1e-15f64.ln() / ratio.ln()).ceil() as i64
    } else {
        i64::MAX
    };
    let chunks = walks.div_ceil(WALK_CHUNK);
    let survivors: f64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = WALK_CHUNK.min(walks - chunk * WALK_CHUNK);
            let mut survived = 0.0;
            for _ in 0..count {
                let mut height: i64 = 0;
                let mut steps = 0;
                survived += loop {
                    if height <= -(r as i64) {
                        break 0.0;
                    }
                    if height >= escape {
                        break 1.0;
                    }
                    if steps == WALK_STEP_CAP {
                        break if ratio < 1.0 {
                            1.0 - ratio.powi((height + r as i64) as i32)
                        } else {
                            0.0
                        };
                    }
                    height += if rng.gen::<f64>() < share { -1 } else { 1 };
                    steps += 1;
                };
            }
            survived
        })
        .sum();
    let p = survivors / walks as f64;
    Ok(WalkEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / walks as f64).sqrt(),
        walks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_reach_examples() {
        assert_eq!(prob_never_reach(0.5, 1).unwrap(), 0.0);
        assert!((prob_never_reach(1.0 / 3.0, 1).unwrap() - 0.5).abs() < 1e-12);
        assert!((prob_never_reach(1.0 / 3.0, 2).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(prob_never_reach(0.7, 2).unwrap(), 0.0);
        assert!(matches!(prob_never_reach(0.3, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn series_examples() {
        let g = g_series(0.25, 1).unwrap();
        assert!((g.sum - 0.5 / 0.40625).abs() < 1e-12);
        // G_s^1 = 1 for every s, so the weighted sum is x / (1 - x)².
        let x = 0.25 * 0.75;
        assert!((g.weighted_sum - x / ((1.0 - x) * (1.0 - x))).abs() < 1e-12);
        assert!(matches!(g_series(0.5, 2), Err(Error::Domain(_))));
        assert!(matches!(f_series(0.6, 2), Err(Error::Domain(_))));
        assert!(matches!(g_series(0.3, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_terms_are_one() {
        for d in 1..6 {
            assert!((g_series(1e-7, d).unwrap().sum - 1.0).abs() < 1e-6);
            assert!((f_series(1e-4, d).unwrap() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn hitting_masses_sum_to_one() {
        for &a in &[0.01, 0.1, 0.25, 0.4, 0.49] {
            for d in 1..10 {
                let (lo, hi) = hitting_probabilities(a, d).unwrap();
                assert!((lo + hi - 1.0).abs() < 1e-12, "a={a} d={d}");
            }
        }
    }

    #[test]
    fn returns_vanish_with_share() {
        let (stay, switch) = fork_abandon_returns(1e-4, 2).unwrap();
        assert!(stay.abs() < 1e-3 && switch.abs() < 1e-3);
        assert!(fork_abandon_returns(0.3, 1).is_err());
    }

    #[test]
    fn abandon_sign_around_threshold() {
        let (s, w) = fork_abandon_returns(0.43, 2).unwrap();
        assert!(s - w < 0.0);
        let (s, w) = fork_abandon_returns(0.44, 2).unwrap();
        assert!(s - w > 0.0);
        let t = abandon_threshold(2).unwrap();
        assert!((t - 0.4302).abs() < 5e-4, "threshold {t}");
    }

    #[test]
    fn deeper_races_favor_abandoning() {
        for &a in &[0.31, 0.35, 0.4, 0.45, 0.49] {
            let gains: Vec<f64> = (2..=8)
                .map(|d| {
                    let (s, w) = fork_abandon_returns(a, d).unwrap();
                    s - w
                })
                .collect();
            assert!(gains.windows(2).all(|p| p[1] < p[0]), "a={a}: {gains:?}");
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let a = simulate_never_reach(0.3, 2, 50_000, 7).unwrap();
        let b = simulate_never_reach(0.3, 2, 50_000, 7).unwrap();
        assert_eq!(a, b);
    }
}
