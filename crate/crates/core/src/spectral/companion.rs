use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{fro, pinv, singular_values, top_left_subspace};
use crate::model::UnionFind;
use crate::spectral::eigen::pair_gap;
use crate::spectral::{CokernelFactorization, Mode};
use crate::Scalar;

/// Partition of the states into companionship classes.
#[derive(Clone, Debug, Serialize)]
pub struct CompanionshipClasses {
    pub classes: Vec<Vec<usize>>,
    /// Representative of each class.
    pub representatives: Vec<usize>,
    /// Companion used for the representative of each class.
    pub companions: Vec<usize>,
    /// Pairwise scores, symmetric with zero diagonal.
    #[serde(skip)]
    pub scores: DMatrix<f64>,
}

impl CompanionshipClasses {
    /// Index of the class containing `j`.
    pub fn class_of(&self, j: usize) -> usize {
        self.classes
            .iter()
            .position(|c| c.contains(&j))
            .expect("every state is classified")
    }
}

/// Per-state `K_j = Z′_j Y′_jᵀ` and its rank-`L` pseudoinverse.
pub(crate) struct PairMatrices<T: Scalar> {
    pub k: Vec<DMatrix<T>>,
    pub k_pinv: Vec<DMatrix<T>>,
    pub l: usize,
}

impl<T: Scalar> PairMatrices<T> {
    pub fn new(fact: &CokernelFactorization<T>, tol_rank: f64) -> Self {
        let l = fact.l();
        let k: Vec<DMatrix<T>> = fact.zp.iter().zip(&fact.yp).map(|(z, y)| z * y.transpose()).collect();
        let k_pinv = k.par_iter().map(|m| pinv(m, Some(l), T::of(tol_rank))).collect();
        Self { k, k_pinv, l }
    }

    /// `B_{ij} = K_j† K_i`.
    pub fn b(&self, i: usize, j: usize) -> DMatrix<T> {
        &self.k_pinv[j] * &self.k[i]
    }

    pub fn is_zero(&self, j: usize) -> bool {
        fro(&self.k[j]) == T::zero()
    }
}

fn penrose_residual<T: Scalar>(b: &DMatrix<T>, c: &DMatrix<T>) -> f64 {
    let nb = fro(b).to_f();
    if nb == 0.0 {
        return f64::INFINITY;
    }
    fro(&(b * c * b - b)).to_f() / nb
}

fn rank_penalty<T: Scalar>(b: &DMatrix<T>, l: usize, tol_rank: f64) -> f64 {
    let s = singular_values(b);
    let s1 = s.get(0).map_or(0.0, |x| x.to_f());
    let sl = s.get(l - 1).map_or(0.0, |x| x.to_f());
    if sl < tol_rank * s1 || s1 == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn probe_residual<T: Scalar>(b: &DMatrix<T>, c: &DMatrix<T>, probes: &DMatrix<T>) -> f64 {
    let x = b * probes;
    let nx = fro(&x).to_f();
    if nx == 0.0 {
        return f64::INFINITY;
    }
    fro(&(b * (c * &x) - &x)).to_f() / nx
}

fn score_with<T: Scalar>(pm: &PairMatrices<T>, i: usize, j: usize, tol_rank: f64, probes: Option<&DMatrix<T>>) -> f64 {
    if pm.is_zero(i) || pm.is_zero(j) {
        return f64::INFINITY;
    }
    let bij = pm.b(i, j);
    let bji = pm.b(j, i);
    let dev = match probes {
        None => penrose_residual(&bij, &bji) + penrose_residual(&bji, &bij),
        Some(p) => probe_residual(&bij, &bji, p) + probe_residual(&bji, &bij, p),
    };
    dev + rank_penalty(&bij, pm.l, tol_rank)
}

/// Companionship score `δ(i, j)`: zero exactly when `i` and `j` are companions.
pub fn companionship_score<T: Scalar>(i: usize, j: usize, fact: &CokernelFactorization<T>, tol_rank: f64) -> f64 {
    let pm = PairMatrices::new(fact, tol_rank);
    let (a, b) = (i.min(j), i.max(j));
    score_with(&pm, a, b, tol_rank, None)
}

/// Gaussian entries by the Box-Muller transform.
fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        T::of((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
    })
}

/// Scores of all pairs.
pub(crate) fn all_scores<T: Scalar>(pm: &PairMatrices<T>, n: usize, tol_rank: f64, probe: bool) -> DMatrix<f64> {
    let probes = probe.then(|| {
        let r = pm.k.first().map_or(0, |k| k.nrows());
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        gaussian_matrix::<T>(r, 8, &mut rng)
    });
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| score_with(pm, i, j, tol_rank, probes.as_ref()))
        .collect();
    let mut s = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&vals) {
        s[(i, j)] = v;
        s[(j, i)] = v;
    }
    s
}

/// Subspace scores for noisy inputs: the sines of the largest principal
/// angles between the column spaces of `Y′_i`, `Y′_j` plus those of `Z′_i`, `Z′_j`.
/// Companions score zero and other pairs close to two.
pub fn subspace_scores<T: Scalar>(fact: &CokernelFactorization<T>) -> DMatrix<f64> {
    let n = fact.n();
    let l = fact.l();
    let basis = |m: &DMatrix<T>| top_left_subspace(m, l).map(|x| x.to_f());
    let uy: Vec<DMatrix<f64>> = fact.yp.par_iter().map(basis).collect();
    let uz: Vec<DMatrix<f64>> = fact.zp.par_iter().map(basis).collect();
    let sine = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let rest = b - a * (a.transpose() * b);
        singular_values(&rest).iter().copied().fold(0.0, f64::max)
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| sine(&uy[i], &uy[j]) + sine(&uz[i], &uz[j]))
        .collect();
    let mut s = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&vals) {
        s[(i, j)] = v;
        s[(j, i)] = v;
    }
    s
}

/// Cutoff at the widest gap between consecutive log-scores.
pub fn auto_threshold(scores: &DMatrix<f64>) -> f64 {
    let n = scores.nrows();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| scores[(i, j)])
        .filter(|x| x.is_finite())
        .map(|x| x.max(1e-300))
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut best = (0.0, f64::INFINITY);
    for w in v.windows(2) {
        let gap = w[1].ln() - w[0].ln();
        if gap > best.0 {
            best = (gap, (w[0] * w[1]).sqrt());
        }
    }
    best.1
}

/// Cutoff for exact inputs: the widest log-gap among the scores below
/// `cap`, with `cap` itself as the last candidate.
pub fn exact_threshold(scores: &DMatrix<f64>, cap: f64) -> f64 {
    let n = scores.nrows();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| scores[(i, j)])
        .filter(|&x| x < cap)
        .map(|x| x.max(1e-300))
        .collect();
    v.push(cap);
    v.sort_by(f64::total_cmp);
    let mut best = (0.0, cap);
    for w in v.windows(2) {
        let gap = w[1].ln() - w[0].ln();
        if gap > best.0 {
            best = (gap, (w[0] * w[1]).sqrt());
        }
    }
    best.1
}

/// Groups states into companionship classes.
///
/// Exact mode sweeps the states in order: each unclassified state collects
/// every unclassified state scoring below `threshold` with it. Noisy mode
/// links any two states scoring below `threshold` and takes connected
/// components. A singleton class is an error when `strict`, otherwise it is
/// merged into the class of its best-scoring state and reported in `warnings`.
/// Representatives are the smallest members; companions maximise the
/// eigenvalue separation.
pub(crate) fn classes_from_scores<T: Scalar>(
    pm: &PairMatrices<T>,
    scores: DMatrix<f64>,
    threshold: f64,
    mode: Mode,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<CompanionshipClasses> {
    let n = scores.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two states".into()));
    }
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    match mode {
        Mode::Exact => {
            for j in 0..n {
                if label[j] != usize::MAX {
                    continue;
                }
                label[j] = count;
                for i in j + 1..n {
                    if label[i] == usize::MAX && scores[(i, j)] < threshold {
                        label[i] = count;
                    }
                }
                count += 1;
            }
        }
        Mode::Noisy => {
            let mut uf = UnionFind::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if scores[(i, j)] < threshold {
                        uf.union(i, j);
                    }
                }
            }
            let mut root_label = vec![usize::MAX; n];
            for j in 0..n {
                let root = uf.find(j);
                if root_label[root] == usize::MAX {
                    root_label[root] = count;
                    count += 1;
                }
                label[j] = root_label[root];
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); count];
    for j in 0..n {
        classes[label[j]].push(j);
    }
    classes_from_partition(pm, scores, classes, strict, warnings)
}

/// Finishes a partition: singletons are merged (or rejected when `strict`),
/// classes are ordered and representatives and companions chosen.
pub(crate) fn classes_from_partition<T: Scalar>(
    pm: &PairMatrices<T>,
    scores: DMatrix<f64>,
    mut classes: Vec<Vec<usize>>,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<CompanionshipClasses> {
    let n = scores.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two states".into()));
    }
    loop {
        let Some(pos) = classes.iter().position(|c| c.len() == 1) else {
            break;
        };
        let j = classes[pos][0];
        if strict {
            return Err(Error::NoCompanion { state: j });
        }
        let nearest = (0..n)
            .filter(|&i| i != j)
            .min_by(|&a, &b| scores[(j, a)].total_cmp(&scores[(j, b)]))
            .expect("n >= 2");
        warnings.push(format!(
            "state {} has no companion; merged with the class of state {}",
            j + 1,
            nearest + 1
        ));
        classes.remove(pos);
        let target = classes
            .iter()
            .position(|c| c.contains(&nearest))
            .expect("nearest is classified");
        classes[target].push(j);
        classes[target].sort_unstable();
    }
    classes.sort_by_key(|c| c[0]);
    let representatives: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let companions = classes.iter().map(|c| best_companion(pm, c[0], c)).collect();
    Ok(CompanionshipClasses {
        classes,
        representatives,
        companions,
        scores,
    })
}

#[derive(Clone, Copy)]
enum Linkage {
    Single,
    Average,
}

/// Agglomerative clustering on log-scores; the partition at every cluster
/// count in `k_min..=k_max`.
fn dendrogram_cuts(scores: &DMatrix<f64>, linkage: Linkage, k_min: usize, k_max: usize) -> Vec<Vec<Vec<usize>>> {
    let n = scores.nrows();
    let mut d = scores.map(|x| {
        if x.is_finite() {
            x.max(1e-300).ln()
        } else {
            f64::MAX.ln()
        }
    });
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|j| Some(vec![j])).collect();
    let mut out = Vec::new();
    let mut alive = n;
    loop {
        if alive >= k_min && alive <= k_max {
            let mut p: Vec<Vec<usize>> = members.iter().flatten().cloned().collect();
            p.iter_mut().for_each(|c| c.sort_unstable());
            p.sort_by_key(|c| c[0]);
            out.push(p);
        }
        if alive <= k_min.max(1) {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            if members[a].is_none() {
                continue;
            }
            for b in a + 1..n {
                if members[b].is_some() && d[(a, b)] < best.0 {
                    best = (d[(a, b)], a, b);
                }
            }
        }
        let (_, a, b) = best;
        let (na, nb) = (
            members[a].as_ref().map_or(0, Vec::len) as f64,
            members[b].as_ref().map_or(0, Vec::len) as f64,
        );
        for c in 0..n {
            if c == a || c == b || members[c].is_none() {
                continue;
            }
            let v = match linkage {
                Linkage::Single => d[(a, c)].min(d[(b, c)]),
                Linkage::Average => (na * d[(a, c)] + nb * d[(b, c)]) / (na + nb),
            };
            d[(a, c)] = v;
            d[(c, a)] = v;
        }
        let moved = members[b].take().expect("alive");
        members[a].as_mut().expect("alive").extend(moved);
        alive -= 1;
    }
    out
}

/// Distinct candidate partitions with between `k_min` and `k_max` classes,
/// from single- and average-linkage clustering of the scores.
pub(crate) fn candidate_partitions(scores: &DMatrix<f64>, k_min: usize, k_max: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = Vec::new();
    for linkage in [Linkage::Single, Linkage::Average] {
        for p in dendrogram_cuts(scores, linkage, k_min, k_max) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// The member of `class` other than `rep` with the largest relative
/// eigenvalue gap; ties go to the smaller index.
pub(crate) fn best_companion<T: Scalar>(pm: &PairMatrices<T>, rep: usize, class: &[usize]) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &i in class {
        if i == rep {
            continue;
        }
        let g = pair_gap(&pm.b(i, rep), pm.l);
        let g = if g.is_nan() { f64::NEG_INFINITY } else { g };
        if best.1 == usize::MAX || g > best.0 {
            best = (g, i);
        }
    }
    best.1
}

/// Companionship classes of a factorization. Noisy mode without a
/// threshold clusters the subspace scores instead of the pair scores.
pub fn companionship_classes<T: Scalar>(
    fact: &CokernelFactorization<T>,
    threshold: Option<f64>,
    mode: Mode,
    strict: bool,
    tol_rank: f64,
) -> Result<(CompanionshipClasses, Vec<String>)> {
    let pm = PairMatrices::new(fact, tol_rank);
    let scores = match (mode, threshold) {
        (Mode::Noisy, None) => subspace_scores(fact),
        _ => all_scores(&pm, fact.n(), tol_rank, false),
    };
    let t = threshold.unwrap_or_else(|| match mode {
        Mode::Exact => exact_threshold(&scores, super::options::EXACT_COMPANION_THRESHOLD),
        Mode::Noisy => auto_threshold(&scores),
    });
    let mut warnings = Vec::new();
    let c = classes_from_scores(&pm, scores, t, mode, strict, &mut warnings)?;
    Ok((c, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};
    use crate::spectral::cokernel_factorization;

    fn appendix_fact() -> CokernelFactorization<f64> {
        let d = exact_trail_distribution(&appendix_mixture());
        cokernel_factorization(&d, 2, None, 1e-8).unwrap()
    }

    #[test]
    fn appendix_scores() {
        let f = appendix_fact();
        assert!(companionship_score(0, 1, &f, 1e-8) < 1e-8);
        assert!(companionship_score(2, 3, &f, 1e-8) < 1e-8);
        assert!(companionship_score(0, 2, &f, 1e-8) > 1e-3);
        assert_eq!(companionship_score(0, 2, &f, 1e-8), companionship_score(2, 0, &f, 1e-8));
    }

    #[test]
    fn appendix_classes() {
        let f = appendix_fact();
        let (c, w) = companionship_classes(&f, None, Mode::Exact, true, 1e-8).unwrap();
        assert_eq!(c.classes, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(c.representatives, vec![0, 2]);
        assert_eq!(c.companions, vec![1, 3]);
        assert!(w.is_empty());
        let (c, _) = companionship_classes(&f, None, Mode::Noisy, true, 1e-8).unwrap();
        assert_eq!(c.classes, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn probe_scores_agree_on_companions() {
        let f = appendix_fact();
        let pm = PairMatrices::new(&f, 1e-8);
        let exact = all_scores(&pm, 4, 1e-8, false);
        let probe = all_scores(&pm, 4, 1e-8, true);
        assert!(probe[(0, 1)] < 1e-8 && exact[(0, 1)] < 1e-8);
        assert!(probe[(0, 2)] > 1e-3 && exact[(0, 2)] > 1e-3);
    }

    #[test]
    fn subspace_scores_separate_appendix_classes() {
        let s = subspace_scores(&appendix_fact());
        assert!(s[(0, 1)] < 1e-8 && s[(2, 3)] < 1e-8);
        assert!(s[(0, 2)] > 0.5 && s[(1, 3)] > 0.5);
    }

    #[test]
    fn candidates_include_the_block_partition() {
        let mut s = DMatrix::from_element(4, 4, 1.0);
        s[(0, 1)] = 1e-6;
        s[(1, 0)] = 1e-6;
        s[(2, 3)] = 1e-5;
        s[(3, 2)] = 1e-5;
        s.fill_diagonal(0.0);
        let c = candidate_partitions(&s, 1, 3);
        assert!(c.contains(&vec![vec![0, 1], vec![2, 3]]));
        assert!(c.iter().all(|p| (1..=3).contains(&p.len())));
    }

    #[test]
    fn auto_threshold_splits_at_widest_gap() {
        let s = DMatrix::from_row_slice(3, 3, &[0., 1e-9, 0.5, 1e-9, 0., 0.7, 0.5, 0.7, 0.]);
        let t = auto_threshold(&s);
        assert!(t > 1e-9 && t < 0.5);
    }
}
