//! The mining-power distraction attack.
//!
//! While the adversary holds a hidden block it posts an easier out-of-band
//! puzzle (difficulty ratio `d = D1/D2`) and promises to reveal the block
//! for any solution. The process has three states: `s0` (normal mining),
//! `s1` (hidden block, puzzle posted) and `s2` (fork race after a
//! non-compliant block in `s1`).

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::model::EpochModel;

const SHARE_TOLERANCE: f64 = 1e-9;

/// How the network splits while the deciding pool weighs its options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistractionPartition {
    pub alpha_a: f64,
    /// The pool deciding between the two puzzles.
    pub alpha_i: f64,
    /// Pools that always mine the easy puzzle when it is posted.
    pub alpha_c: f64,
    /// Pools that always keep mining Bitcoin.
    pub alpha_nc: f64,
}

impl DistractionPartition {
    pub fn new(alpha_a: f64, alpha_i: f64, alpha_c: f64, alpha_nc: f64) -> Result<Self> {
        let p = DistractionPartition {
            alpha_a,
            alpha_i,
            alpha_c,
            alpha_nc,
        };
        p.validate()?;
        Ok(p)
    }

    /// Every pool other than the adversary and the deciding pool complies.
    pub fn all_compliant(alpha_a: f64, alpha_i: f64) -> Result<Self> {
        Self::new(alpha_a, alpha_i, (1.0 - alpha_a - alpha_i).max(0.0), 0.0)
    }

    /// Splits the remaining share, sending `nc_fraction` of it to
    /// non-compliant pools.
    pub fn with_split(alpha_a: f64, alpha_i: f64, nc_fraction: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&nc_fraction), || {
            Error::Validation(format!(
                "non-compliant fraction {nc_fraction} outside [0, 1]"
            ))
        })?;
        let rest = (1.0 - alpha_a - alpha_i).max(0.0);
        Self::new(
            alpha_a,
            alpha_i,
            rest * (1.0 - nc_fraction),
            rest * nc_fraction,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.alpha_a, self.alpha_i, self.alpha_c, self.alpha_nc];
        ensure(parts.iter().all(|x| x.is_finite() && *x >= 0.0), || {
            Error::Validation(format!("shares must be non-negative, got {parts:?}"))
        })?;
        let total: f64 = parts.iter().sum();
        ensure((total - 1.0).abs() <= SHARE_TOLERANCE, || {
            Error::Validation(format!("shares sum to {total}, expected 1"))
        })
    }
}

/// Whether the deciding pool mines the easy puzzle or Bitcoin in `s1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PuzzleChoice {
    MiniPow,
    Bitcoin,
}

/// Rates in `s1` and the stationary state probabilities of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioRates {
    /// Puzzle-solving rate in `s1`, relative to the Bitcoin rate.
    pub rate_s1: f64,
    pub alpha_a: f64,
    pub alpha_i: f64,
    pub alpha_c: f64,
    pub alpha_nc: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

fn check_ratio(d_ratio: f64) -> Result<()> {
    ensure(d_ratio.is_finite() && d_ratio >= 1.0, || {
        Error::Domain(format!("difficulty ratio must be >= 1, got {d_ratio}"))
    })
}

pub fn scenario_rates(
    part: &DistractionPartition,
    d_ratio: f64,
    choice: PuzzleChoice,
) -> Result<ScenarioRates> {
    part.validate()?;
    check_ratio(d_ratio)?;
    let d = d_ratio;
    let i_weight = match choice {
        PuzzleChoice::MiniPow => d,
        PuzzleChoice::Bitcoin => 1.0,
    };
    let rate = d * part.alpha_c + i_weight * part.alpha_i + part.alpha_nc + part.alpha_a;
    let (a, i, c, nc) = (
        part.alpha_a / rate,
        i_weight * part.alpha_i / rate,
        d * part.alpha_c / rate,
        part.alpha_nc / rate,
    );
    // Blocks found in `s1` that enter a fork race.
    let racing = match choice {
        PuzzleChoice::MiniPow => nc,
        PuzzleChoice::Bitcoin => nc + i,
    };
    let norm = 1.0 - a + part.alpha_a * (1.0 + racing);
    Ok(ScenarioRates {
        rate_s1: rate,
        alpha_a: a,
        alpha_i: i,
        alpha_c: c,
        alpha_nc: nc,
        p0: (1.0 - a) / norm,
        p1: part.alpha_a / norm,
        p2: part.alpha_a * racing / norm,
    })
}

/// Normalized return difference between mining the easy puzzle and Bitcoin
/// for the deciding pool; it prefers the puzzle iff the result is at least
/// `epsilon`.
pub fn expected_return_delta(
    part: &DistractionPartition,
    d_ratio: f64,
    br2: f64,
    epsilon: f64,
) -> Result<f64> {
    let mini = scenario_rates(part, d_ratio, PuzzleChoice::MiniPow)?;
    let btc = scenario_rates(part, d_ratio, PuzzleChoice::Bitcoin)?;
    if part.alpha_i == 0.0 {
        return Ok(0.0);
    }
    let br3 = epsilon;
    let ai = part.alpha_i;
    let r_mini =
        ai * mini.p0 + ai * mini.p2 * (1.0 + br3) + mini.alpha_i * mini.p1 * br2 * mini.rate_s1;
    let racing = btc.alpha_nc + btc.alpha_i;
    let r_btc = ai * btc.p0
        + ai * btc.p2 * (btc.alpha_nc / racing) * (1.0 + br3)
        + 2.0 * ai * btc.p2 * (btc.alpha_i / racing);
    Ok((r_mini - r_btc) / ai)
}

/// Easy-puzzle reward that makes lying profitable for solvers when no hidden
/// block exists.
pub fn lying_bribe_bound(d_ratio: f64, epsilon: f64) -> Result<f64> {
    check_ratio(d_ratio)?;
    Ok((1.0 + epsilon) / d_ratio)
}

/// Strict upper bound on the per-solution reward for the attack to beat
/// honest mining.
pub fn distraction_profit_bound(alpha_a: f64, d_ratio: f64) -> Result<f64> {
    check_ratio(d_ratio)?;
    ensure(alpha_a > 0.0 && alpha_a < 1.0, || {
        Error::Domain(format!("alpha_A must lie in (0, 1), got {alpha_a}"))
    })?;
    Ok(alpha_a / d_ratio)
}

/// Profit per unit time with `solutions_per_epoch` easy-puzzle solutions
/// paid `br` each.
pub fn distraction_profit(
    alpha_a: f64,
    br: f64,
    d_ratio: f64,
    solutions_per_epoch: f64,
    epoch: &EpochModel,
) -> Result<f64> {
    let bound = distraction_profit_bound(alpha_a, d_ratio)?;
    epoch.validate()?;
    let vr = epoch.value_rate();
    Ok(vr * alpha_a + vr * solutions_per_epoch / epoch.epoch_length as f64 * (bound - br))
}

/// Evenly spaced `start, start+step, ..` up to `end` inclusive.
pub fn share_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    ensure(step > 0.0 && start <= end, || {
        Error::Validation(format!("bad grid {start}:{end}:{step}"))
    })?;
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // Snap to 12 decimals so 0.1 + 2 * 0.1 prints as 0.3.
    Ok((0..=n)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Largest deciding-pool share in the default grid, just above the biggest
/// real-world pool.
pub const DECIDING_SHARE_MAX: f64 = 0.30;

/// Deciding-pool shares `0.01, 0.02, .., DECIDING_SHARE_MAX`.
pub fn default_deciding_grid() -> Vec<f64> {
    share_grid(0.01, DECIDING_SHARE_MAX, 0.01).expect("constant grid is valid")
}

/// How the share outside the adversary and the deciding pool is split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitConvention {
    /// Fraction of that share held by non-compliant pools.
    pub nc_fraction: f64,
}

impl Default for SplitConvention {
    fn default() -> Self {
        SplitConvention { nc_fraction: 0.0 }
    }
}

/// Whether every deciding pool on the grid prefers the easy puzzle.
pub fn puzzle_dominates(
    alpha_a: f64,
    br2: f64,
    epsilon: f64,
    d_ratio: f64,
    grid: &[f64],
    split: SplitConvention,
) -> Result<bool> {
    for &ai in grid.iter().filter(|&&ai| ai + alpha_a <= 1.0) {
        let part = DistractionPartition::with_split(alpha_a, ai, split.nc_fraction)?;
        if expected_return_delta(&part, d_ratio, br2, epsilon)? < epsilon {
            return Ok(false);
        }
    }
    Ok(true)
}

pub const RATIO_RESOLUTION: f64 = 0.01;

/// Smallest difficulty ratio, to within [`RATIO_RESOLUTION`], at which every
/// deciding pool on the grid prefers the easy puzzle.
pub fn min_difficulty_ratio(
    alpha_a: f64,
    br2: f64,
    epsilon: f64,
    grid: &[f64],
    split: SplitConvention,
) -> Result<f64> {
    ensure(br2 > 0.0 && br2 < alpha_a, || {
        Error::Infeasible(format!(
            "puzzle reward {br2} must lie in (0, alpha_A = {alpha_a}); otherwise no ratio pays off"
        ))
    })?;
    let ceiling = alpha_a / br2;
    let holds = |d: f64| puzzle_dominates(alpha_a, br2, epsilon, d, grid, split);
    // Coarse scan for the first feasible ratio, then bisect the bracket.
    let coarse = 0.25;
    let mut prev = 1.0;
    if holds(prev)? {
        return Ok(prev);
    }
    let mut d = prev;
    loop {
        d = (d + coarse).min(ceiling);
        if holds(d)? {
            break;
        }
        if d >= ceiling {
            return Err(Error::Infeasible(format!(
                "no difficulty ratio up to alpha_A/br2 = {ceiling:.4} makes the puzzle dominant"
            )));
        }
        prev = d;
    }
    let (mut lo, mut hi) = (prev, d);
    while hi - lo > RATIO_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Adversarial reward share under the attack at a given ratio, for an
/// all-compliant network where the deciding pool mines the puzzle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistractionOutcome {
    pub d_ratio: f64,
    /// Puzzle solutions per canonical block.
    pub solutions_per_block: f64,
    pub reward_share: f64,
    /// Relative increase over `alpha_a`, in percent.
    pub uplift_percent: f64,
}

pub fn distraction_outcome(
    part: &DistractionPartition,
    d_ratio: f64,
    br2: f64,
) -> Result<DistractionOutcome> {
    let s = scenario_rates(part, d_ratio, PuzzleChoice::MiniPow)?;
    let solve = s.alpha_c + s.alpha_i;
    let blocks = s.p0 * (1.0 - part.alpha_a) + s.p1 * (s.alpha_a + solve) + 2.0 * s.p2;
    let per_block = s.p1 * solve / blocks;
    let bound = distraction_profit_bound(part.alpha_a, d_ratio)?;
    let reward_share = part.alpha_a + per_block * (bound - br2);
    Ok(DistractionOutcome {
        d_ratio,
        solutions_per_block: per_block,
        reward_share,
        uplift_percent: 100.0 * (reward_share - part.alpha_a) / part.alpha_a,
    })
}
