//! Rank correlations and permutation significance tests.
//!
//! Both coefficients are tie-aware, which matters for Likert data:
//! Spearman's rho assigns tied values their average rank before taking a
//! Pearson correlation, and Kendall's tau-b applies the tie correction
//!
//! ```text
//! tau_b = (C - D) / sqrt((n0 - t_x)(n0 - t_y)),   n0 = n(n-1)/2
//! ```
//!
//! where `t_x`/`t_y` count pairs tied on either variable. Tau-b is computed
//! with Knight's O(n log n) algorithm (sort by x, then count merge-sort
//! swaps on y); the test suite checks it against a direct O(n^2) pair
//! enumeration.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum iterations accepted by [`perm_pvalue`].
pub const MIN_PERMUTATIONS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankError {
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 paired observations, got {n}")]
    TooShort { n: usize },
    #[error("{which} vector is constant; rank correlation is undefined")]
    ConstantInput { which: &'static str },
    #[error("{which} vector contains a non-finite value")]
    NonFinite { which: &'static str },
    #[error("permutation test needs at least {min} iterations, got {got}")]
    TooFewIterations { got: u32, min: u32 },
}

fn validate_pair(x: &[f64], y: &[f64]) -> Result<(), RankError> {
    if x.len() != y.len() {
        return Err(RankError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(RankError::TooShort { n: x.len() });
    }
    for (which, v) in [("x", x), ("y", y)] {
        if v.iter().any(|e| !e.is_finite()) {
            return Err(RankError::NonFinite { which });
        }
        if v.iter().all(|e| *e == v[0]) {
            return Err(RankError::ConstantInput { which });
        }
    }
    Ok(())
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean of ranks i+1..=j+1.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RankError::ConstantInput { which: "x" });
    }
    if syy == 0.0 {
        return Err(RankError::ConstantInput { which: "y" });
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Spearman's rho: Pearson correlation of the average-ranked data.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    validate_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b via Knight's algorithm.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    validate_pair(x, y)?;
    let n = x.len();

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .expect("finite values")
            .then(y[a].partial_cmp(&y[b]).expect("finite values"))
    });

    // Tie pair counts over the x-sorted order: t_x for runs of equal x,
    // t_xy for runs of equal (x, y).
    let mut t_x = 0u64;
    let mut t_xy = 0u64;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let run = (j - i + 1) as u64;
            t_x += run * (run - 1) / 2;
            let mut a = i;
            while a <= j {
                let mut b = a;
                while b < j && y[idx[b + 1]] == y[idx[a]] {
                    b += 1;
                }
                let sub = (b - a + 1) as u64;
                t_xy += sub * (sub - 1) / 2;
                a = b + 1;
            }
            i = j + 1;
        }
    }

    // Swap count: merge-sort inversions of y in x-sorted order.
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count_inversions(&mut ys);

    // ys is now sorted; count t_y from its runs.
    let mut t_y = 0u64;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && ys[j + 1] == ys[i] {
                j += 1;
            }
            let run = (j - i + 1) as u64;
            t_y += run * (run - 1) / 2;
            i = j + 1;
        }
    }

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let c_minus_d = n0 as i128 - t_x as i128 - t_y as i128 + t_xy as i128 - 2 * swaps as i128;
    let denom = (n0 - t_x) as f64 * (n0 - t_y) as f64;
    // A zero factor would mean a fully tied vector, which the constant-input
    // guard already rejected.
    Ok(c_minus_d as f64 / libm::sqrt(denom))
}

/// Sorts `values` while counting inversions (strict descents only; equal
/// elements are not inversions).
fn merge_count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mut buf = values.to_vec();
    merge_sort(values, &mut buf)
}

fn merge_sort(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left_buf, right_buf) = buf.split_at_mut(mid);
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        merge_sort(left, left_buf) + merge_sort(right, right_buf)
    };
    let mut i = 0;
    let mut j = mid;
    let mut k = 0;
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            j += 1;
            swaps += (mid - i) as u64;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Two-sided permutation p-value for a correlation statistic.
///
/// Shuffles `y` for each iteration (seeded, reproducible) and counts
/// permutations whose |statistic| reaches the observed |statistic|:
///
/// ```text
/// p = (1 + hits) / (1 + iterations)
/// ```
pub fn perm_pvalue<F>(
    statistic: F,
    x: &[f64],
    y: &[f64],
    iterations: u32,
    seed: u64,
) -> Result<f64, RankError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, RankError>,
{
    if iterations < MIN_PERMUTATIONS {
        return Err(RankError::TooFewIterations {
            got: iterations,
            min: MIN_PERMUTATIONS,
        });
    }
    let observed = statistic(x, y)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permuted = y.to_vec();
    let mut hits = 0u64;
    // Equality up to float noise counts as a hit (a permutation identical in
    // rank structure must not be excluded by a last-bit difference).
    let slack = 1e-12;
    for _ in 0..iterations {
        permuted.shuffle(&mut rng);
        let s = statistic(x, &permuted)?;
        if s.abs() >= observed - slack {
            hits += 1;
        }
    }
    Ok((1.0 + hits as f64) / (1.0 + iterations as f64))
}
