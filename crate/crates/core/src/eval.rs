//! Distances between distributions and between mixtures.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Mixture, TrailDistribution};
use crate::Scalar;

/// Total variation `½ Σ |p − q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Total variation between two 3-trail distributions over the union of their supports.
pub fn trail_error<T: Scalar, U: Scalar>(p: &TrailDistribution<T>, q: &TrailDistribution<U>) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::ShapeMismatch(format!("n = {} and n = {}", p.n(), q.n())));
    }
    let mut diff: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (i, j, k, x) in p.entries() {
        *diff.entry((j, i, k)).or_insert(0.0) += x.to_f();
    }
    for (i, j, k, x) in q.entries() {
        *diff.entry((j, i, k)).or_insert(0.0) -= x.to_f();
    }
    Ok(0.5 * diff.values().map(|d| d.abs()).sum::<f64>())
}

/// Optimal matching of the chains of two mixtures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    /// `permutation[ℓ]` is the learned chain matched to true chain `ℓ`.
    pub permutation: Vec<usize>,
    pub cost: f64,
    pub per_chain_tv: Vec<f64>,
}

/// Recovery error with its matching.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryError {
    pub matching: MatchResult,
    /// `cost / (2Ln)`.
    pub value: f64,
    /// Total variation between the flattened start matrices under the matching.
    pub start_tv: f64,
}

/// Minimum-cost perfect matching of a square cost matrix given as rows.
///
/// Returns `perm` with row `i` matched to column `perm[i]` and the total
/// cost summed in row order. Among optimal matchings the lexicographically
/// smallest `perm` is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::ShapeMismatch("cost matrix must be square".into()));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCost { row: i, col: j });
        }
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let (_, optimum) = solve(cost, &[], &[]);
    let scale = cost.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    let slack = 1e-12 * scale * n as f64;
    // fix rows one at a time to the smallest column that still attains the optimum
    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let used: Vec<usize> = fixed.iter().map(|&(_, c)| c).collect();
        let fixed_cost: f64 = fixed.iter().map(|&(r, c)| cost[r][c]).sum();
        let mut fallback = (f64::INFINITY, usize::MAX);
        let mut chosen = None;
        for c in 0..n {
            if used.contains(&c) {
                continue;
            }
            let rows: Vec<usize> = fixed.iter().map(|&(r, _)| r).chain([i]).collect();
            let cols: Vec<usize> = used.iter().copied().chain([c]).collect();
            let (_, rest) = solve(cost, &rows, &cols);
            let total = fixed_cost + cost[i][c] + rest;
            if total <= optimum + slack {
                chosen = Some(c);
                break;
            }
            if total < fallback.0 {
                fallback = (total, c);
            }
        }
        fixed.push((i, chosen.unwrap_or(fallback.1)));
    }
    let perm: Vec<usize> = fixed.iter().map(|&(_, c)| c).collect();
    let total = (0..n).fold(0.0, |acc, i| acc + cost[i][perm[i]]);
    Ok((perm, total))
}

/// Kuhn-Munkres with potentials on the rows and columns not excluded.
/// Returns the matching of the remaining rows and its cost.
fn solve(cost: &[Vec<f64>], skip_rows: &[usize], skip_cols: &[usize]) -> (Vec<(usize, usize)>, f64) {
    let rows: Vec<usize> = (0..cost.len()).filter(|r| !skip_rows.contains(r)).collect();
    let cols: Vec<usize> = (0..cost.len()).filter(|c| !skip_cols.contains(c)).collect();
    let m = rows.len();
    if m == 0 {
        return (Vec::new(), 0.0);
    }
    let a = |i: usize, j: usize| cost[rows[i - 1]][cols[j - 1]];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs = Vec::with_capacity(m);
    for j in 1..=m {
        pairs.push((rows[p[j] - 1], cols[j - 1]));
    }
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    (pairs, total)
}

fn row_tv<T: Scalar, U: Scalar>(a: &Mixture<T>, la: usize, b: &Mixture<U>, lb: usize, i: usize) -> f64 {
    let n = a.n();
    0.5 * (0..n)
        .map(|j| (a.m(la, i, j).to_f() - b.m(lb, i, j).to_f()).abs())
        .sum::<f64>()
}

/// `1/(2Ln) · min_σ Σ_ℓ Σ_i TV(M^ℓ_i, N^{σ(ℓ)}_i)`.
pub fn recovery_error<T: Scalar, U: Scalar>(truth: &Mixture<T>, learned: &Mixture<U>) -> Result<RecoveryError> {
    let (n, l) = (truth.n(), truth.l());
    if learned.n() != n || learned.l() != l {
        return Err(Error::ShapeMismatch(format!(
            "truth has n = {n}, L = {l}; learned has n = {}, L = {}",
            learned.n(),
            learned.l()
        )));
    }
    let cost: Vec<Vec<f64>> = (0..l)
        .map(|a| {
            (0..l)
                .map(|b| (0..n).map(|i| row_tv(truth, a, learned, b, i)).sum())
                .collect()
        })
        .collect();
    let (perm, total) = hungarian(&cost)?;
    let per_chain_tv: Vec<f64> = (0..l).map(|a| cost[a][perm[a]]).collect();
    let start_tv = 0.5
        * (0..l)
            .flat_map(|a| (0..n).map(move |i| (a, i)))
            .map(|(a, i)| (truth.s(a, i).to_f() - learned.s(perm[a], i).to_f()).abs())
            .sum::<f64>();
    Ok(RecoveryError {
        value: total / (2 * l * n) as f64,
        matching: MatchResult {
            permutation: perm,
            cost: total,
            per_chain_tv,
        },
        start_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.1).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        assert_eq!(hungarian(&[vec![0., 1.], vec![1., 0.]]).unwrap(), (vec![0, 1], 0.0));
        assert_eq!(hungarian(&[vec![1., 0.], vec![0., 1.]]).unwrap(), (vec![1, 0], 0.0));
        assert_eq!(hungarian(&[vec![1., 1.], vec![1., 1.]]).unwrap().0, vec![0, 1]);
        assert!(matches!(
            hungarian(&[vec![f64::NAN]]),
            Err(Error::NonFiniteCost { row: 0, col: 0 })
        ));
    }

    #[test]
    fn permuted_chains_have_zero_error() {
        let m = appendix_mixture();
        let p = m.permuted(&[1, 0]).unwrap();
        let e = recovery_error(&m, &p).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.matching.permutation, vec![1, 0]);
        assert_eq!(e.start_tv, 0.0);
    }

    #[test]
    fn identical_distributions() {
        let d = exact_trail_distribution(&appendix_mixture());
        assert_eq!(trail_error(&d, &d).unwrap(), 0.0);
    }
}
