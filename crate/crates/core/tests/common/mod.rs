//! Test-only oracles, written independently of the library's closed forms.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Path counts `G_s^d` and `F_s^d` for `s = 0..=s_max`, by dynamic
/// programming over every lattice point strictly between `y = x - 2` and
/// `y = x + d`.
pub fn lattice_counts(d: i64, s_max: usize) -> (Vec<u128>, Vec<u128>) {
    let size = s_max as i64 + d + 3;
    let inside = |x: i64, y: i64| y - x > -2 && y - x < d;
    let mut paths = vec![vec![0u128; size as usize + 1]; size as usize + 1];
    paths[0][0] = 1;
    for x in 0..=size {
        for y in 0..=size {
            if (x, y) == (0, 0) || !inside(x, y) {
                continue;
            }
            let mut n = 0;
            if x > 0 && inside(x - 1, y) {
                n += paths[x as usize - 1][y as usize];
            }
            if y > 0 && inside(x, y - 1) {
                n += paths[x as usize][y as usize - 1];
            }
            paths[x as usize][y as usize] = n;
        }
    }
    // The last step into (s, s + d) is up; into (s + 2, s) it is right.
    let g = (0..=s_max as i64)
        .map(|s| paths[s as usize][(s + d - 1) as usize])
        .collect();
    let f = (0..=s_max as i64)
        .map(|s| paths[(s + 1) as usize][s as usize])
        .collect();
    (g, f)
}

/// Partial sums `Σ c_s x^s` and `Σ s c_s x^s` with a bound on the tail.
/// Counts grow at most fourfold per step (two steps per `s`), so the tail
/// is dominated by a geometric series in `4x`.
pub fn partial_series(counts: &[u128], x: f64) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (s, &c) in counts.iter().enumerate() {
        let term = c as f64 * x.powi(s as i32);
        sum += term;
        weighted += s as f64 * term;
    }
    let last = counts.len() - 1;
    let ratio = 4.0 * x;
    assert!(ratio < 0.5, "tail bound needs 4x < 1/2");
    let head = *counts.last().unwrap() as f64 * x.powi(last as i32);
    // Σ_{k>=1} (last + k) ratio^k bounds the weighted tail as well.
    let tail = head * (last as f64 + 2.0) * ratio / (1.0 - ratio).powi(2);
    (sum, weighted, tail)
}

/// Monte Carlo for the probability that a walk stepping down with
/// probability `share` never reaches depth `r`. Walks stop as survivors
/// once they climb high enough that a return has probability below 1e-12.
pub fn walk_never_reach(share: f64, r: i64, walks: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ratio = share / (1.0 - share);
    let escape = (1e-12f64.ln() / ratio.ln()).ceil() as i64;
    let mut survived = 0u64;
    for _ in 0..walks {
        let mut h = 0i64;
        while h > -r && h < escape {
            h += if rng.gen_bool(share) { -1 } else { 1 };
        }
        survived += (h >= escape) as u64;
    }
    let p = survived as f64 / walks as f64;
    (p, (p * (1.0 - p) / walks as f64).sqrt())
}

/// Stationary distribution of a dense row-stochastic matrix by Gaussian
/// elimination on `πP = π, Σπ = 1`.
pub fn stationary_dense(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    // Rows of (P^T - I), with the last equation replaced by normalization.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| p[j][i] - if i == j { 1.0 } else { 0.0 })
                .collect();
            row.push(0.0);
            row
        })
        .collect();
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                    *x -= factor * p;
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// A pseudo-random petty pool layout: `count` shares summing to
/// `1 - alpha`, each at least `floor`.
pub fn random_petty<R: Rng>(rng: &mut R, alpha: f64, count: usize, floor: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let spare = 1.0 - alpha - floor * count as f64;
    assert!(spare > 0.0);
    let mut shares: Vec<f64> = weights.iter().map(|w| floor + spare * w / total).collect();
    // Absorb rounding so the shares sum to one exactly.
    let drift = 1.0 - alpha - shares.iter().sum::<f64>();
    shares[0] += drift;
    shares
}
