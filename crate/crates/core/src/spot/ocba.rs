//! Optimal computing budget allocation for noisy configurations
//! (minimization: the best configuration has the smallest mean).

use crate::error::{Error, Result};
use statrs::function::erf::erfc;

/// Largest budget allocated by exact maximization of the approximate PCS.
pub const EXACT_BUDGET_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigStats {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

fn best_index(stats: &[ConfigStats]) -> usize {
    let mut b = 0;
    for (i, s) in stats.iter().enumerate() {
        if s.mean < stats[b].mean {
            b = i;
        }
    }
    b
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Bonferroni lower bound on the probability of correct selection when
/// configuration `i` has `stats[i].count + extra[i]` samples.
pub fn approx_pcs(stats: &[ConfigStats], extra: &[usize]) -> f64 {
    1.0 - miss_terms(stats, extra).iter().sum::<f64>()
}

fn miss_terms(stats: &[ConfigStats], extra: &[usize]) -> Vec<f64> {
    let b = best_index(stats);
    let nb = (stats[b].count + extra[b]) as f64;
    (0..stats.len())
        .filter(|&i| i != b)
        .map(|i| miss(&stats[b], nb, &stats[i], (stats[i].count + extra[i]) as f64))
        .collect()
}

fn miss(best: &ConfigStats, nb: f64, other: &ConfigStats, ni: f64) -> f64 {
    let delta = other.mean - best.mean;
    let spread = (best.variance / nb + other.variance / ni).sqrt();
    if spread == 0.0 {
        return if delta > 0.0 { 0.0 } else { 0.5 };
    }
    upper_tail(delta / spread)
}

fn validate(stats: &[ConfigStats]) -> Result<()> {
    if stats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "allocation needs at least 2 configurations, got {}",
            stats.len()
        )));
    }
    for s in stats {
        if s.count < 1 || !s.mean.is_finite() || !s.variance.is_finite() || s.variance < 0.0 {
            return Err(Error::InvalidControl(format!("invalid configuration statistics {s:?}")));
        }
    }
    Ok(())
}

/// Distributes `budget` extra evaluations over the configurations.
///
/// Budgets up to [`EXACT_BUDGET_LIMIT`] maximize [`approx_pcs`] over all
/// integer allocations; larger budgets follow [`ocba_targets`]. Zero-variance
/// configurations receive nothing unless every configuration has zero
/// variance, in which case the best one takes the whole budget.
pub fn ocba_allocate(stats: &[ConfigStats], budget: usize) -> Result<Vec<usize>> {
    validate(stats)?;
    let k = stats.len();
    let mut alloc = vec![0; k];
    if budget == 0 {
        return Ok(alloc);
    }
    let b = best_index(stats);
    if stats.iter().all(|s| s.variance == 0.0) {
        alloc[b] = budget;
        return Ok(alloc);
    }
    if budget > EXACT_BUDGET_LIMIT {
        return ocba_targets(stats, budget);
    }
    Ok(exact(stats, budget))
}

fn exact(stats: &[ConfigStats], budget: usize) -> Vec<usize> {
    let k = stats.len();
    let b = best_index(stats);
    let others: Vec<usize> = (0..k).filter(|&i| i != b).collect();
    let can_receive = |i: usize| stats[i].variance > 0.0;
    let best_range = if can_receive(b) { budget } else { 0 };

    let mut winner: Option<(f64, Vec<usize>)> = None;
    for eb in 0..=best_range {
        let rest = budget - eb;
        let nb = (stats[b].count + eb) as f64;
        // cost[j][e]: miss term of the j-th competitor with e extra samples
        let cost: Vec<Vec<f64>> = others
            .iter()
            .map(|&i| {
                (0..=rest)
                    .map(|e| {
                        if e > 0 && !can_receive(i) {
                            f64::INFINITY
                        } else {
                            miss(&stats[b], nb, &stats[i], (stats[i].count + e) as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        // dp[j][r]: least total miss over the first j competitors using exactly r
        let m = others.len();
        let mut dp = vec![vec![f64::INFINITY; rest + 1]; m + 1];
        let mut choice = vec![vec![0usize; rest + 1]; m + 1];
        dp[0][0] = 0.0;
        for j in 0..m {
            for r in 0..=rest {
                if !dp[j][r].is_finite() {
                    continue;
                }
                for e in 0..=(rest - r) {
                    let v = dp[j][r] + cost[j][e];
                    if v < dp[j + 1][r + e] {
                        dp[j + 1][r + e] = v;
                        choice[j + 1][r + e] = e;
                    }
                }
            }
        }
        if !dp[m][rest].is_finite() {
            continue;
        }
        let pcs = 1.0 - dp[m][rest];
        if winner.as_ref().is_none_or(|(w, _)| pcs > *w) {
            let mut alloc = vec![0; k];
            alloc[b] = eb;
            let mut r = rest;
            for j in (1..=m).rev() {
                let e = choice[j][r];
                alloc[others[j - 1]] = e;
                r -= e;
            }
            winner = Some((pcs, alloc));
        }
    }
    winner.map(|w| w.1).unwrap_or_else(|| {
        let mut alloc = vec![0; k];
        alloc[b] = budget;
        alloc
    })
}

/// Ratio-rule allocation: competitor totals proportional to
/// `(sigma_i / delta_i)^2`, the best one at `sigma_b * sqrt(sum N_i^2 / sigma_i^2)`.
/// Extra samples go to configurations below their target, rounded by largest
/// remainder so the result sums to `budget`.
pub fn ocba_targets(stats: &[ConfigStats], budget: usize) -> Result<Vec<usize>> {
    validate(stats)?;
    let k = stats.len();
    let b = best_index(stats);
    let mut alloc = vec![0; k];
    if budget == 0 {
        return Ok(alloc);
    }
    let spread = stats.iter().map(|s| s.mean.abs()).fold(0.0, f64::max).max(1.0);
    let min_delta = 1e-12 * spread;
    let mut ratio = vec![0.0; k];
    for i in (0..k).filter(|&i| i != b) {
        let delta = (stats[i].mean - stats[b].mean).max(min_delta);
        ratio[i] = stats[i].variance / (delta * delta);
    }
    ratio[b] = if stats[b].variance > 0.0 {
        let s: f64 = (0..k)
            .filter(|&i| i != b && stats[i].variance > 0.0)
            .map(|i| ratio[i] * ratio[i] / stats[i].variance)
            .sum();
        stats[b].variance.sqrt() * s.sqrt()
    } else {
        0.0
    };
    let total_ratio: f64 = ratio.iter().sum();
    if !(total_ratio > 0.0 && total_ratio.is_finite()) {
        alloc[b] = budget;
        return Ok(alloc);
    }
    let total = stats.iter().map(|s| s.count).sum::<usize>() + budget;
    let want: Vec<f64> = (0..k)
        .map(|i| (total as f64 * ratio[i] / total_ratio - stats[i].count as f64).max(0.0))
        .collect();
    let want_sum: f64 = want.iter().sum();
    if want_sum <= 0.0 {
        alloc[b] = budget;
        return Ok(alloc);
    }
    let share: Vec<f64> = want.iter().map(|w| w / want_sum * budget as f64).collect();
    let mut given = 0;
    for i in 0..k {
        alloc[i] = share[i].floor() as usize;
        given += alloc[i];
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| (share[j] - share[j].floor()).total_cmp(&(share[i] - share[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().take(budget - given) {
        alloc[i] += 1;
    }
    Ok(alloc)
}
