use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `U` of the first sample: pairs `(x, y)` with `x > y`, ties counting ½.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks of the pooled sample, doubled so that they are integers.
fn doubled_ranks(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().enumerate().map(|(i, v)| (v, i)).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged, times two.
        let r2 = (i + j + 2) as u64;
        for p in &pooled[i..=j] {
            ranks[p.1] = r2;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("mann_whitney_u sample"));
    }
    Ok(())
}

/// Doubled rank sum of `a` and the doubled `U_a`.
fn statistic(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>, u64) {
    let (ranks, ties) = doubled_ranks(a, b);
    let r2: u64 = ranks[..a.len()].iter().sum();
    (ranks, ties, r2)
}

fn u_from(r2: u64, n: usize) -> f64 {
    (r2 as f64 - (n * (n + 1)) as f64) / 2.0
}

/// p-value from the permutation distribution of the rank sum, enumerated
/// over all `C(n+m, n)` assignments of the pooled midranks.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    let (ranks, _, r2) = statistic(a, b);
    let n = a.len();
    let total = ranks.iter().sum::<u64>() as usize;
    // counts[k][s]: subsets of size k with doubled rank sum s.
    let mut counts = vec![vec![0f64; total + 1]; n + 1];
    counts[0][0] = 1.0;
    for (seen, &r) in ranks.iter().enumerate() {
        let r = r as usize;
        for k in (1..=n.min(seen + 1)).rev() {
            let (lo, hi) = counts.split_at_mut(k);
            for s in (r..=total).rev() {
                hi[0][s] += lo[k - 1][s - r];
            }
        }
    }
    let n_all = ranks.len();
    // |2R − n(N+1)| is twice the distance of the rank sum from its mean.
    let centre = (n * (n_all + 1)) as i64;
    let observed = (r2 as i64 - centre).abs();
    let mut extreme = 0.0;
    let mut all = 0.0;
    for (s, &c) in counts[n].iter().enumerate() {
        all += c;
        if (s as i64 - centre).abs() >= observed {
            extreme += c;
        }
    }
    Ok(MannWhitney { u: u_from(r2, n), p: (extreme / all).min(1.0), exact: true })
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_u_approx(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    let (_, ties, r2) = statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let big = n + m;
    let u = u_from(r2, a.len());
    let tie_sum: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = if big > 1.0 { n * m / 12.0 * ((big + 1.0) - tie_sum / (big * (big - 1.0))) } else { 0.0 };
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - n * m / 2.0).abs() - 0.5).max(0.0) / libm::sqrt(var);
        libm::erfc(z / core::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p, exact: false })
}

/// Two-sided test; exact when `|a| + |b| ≤ EXACT_LIMIT`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.len() + b.len() <= EXACT_LIMIT {
        mann_whitney_u_exact(a, b)
    } else {
        mann_whitney_u_approx(a, b)
    }
}
