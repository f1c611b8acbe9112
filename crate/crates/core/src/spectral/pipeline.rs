use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::trail_error;
use crate::model::{exact_trail_distribution, Mixture, MixtureFile, TrailDistribution};
use crate::params::estimate_r;
use crate::spectral::companion::{
    all_scores, auto_threshold, best_companion, candidate_partitions, classes_from_partition, classes_from_scores,
    exact_threshold, subspace_scores, PairMatrices,
};
use crate::spectral::eigen::{eigendecompose_with, fix_scaling_with};
use crate::spectral::label::{feasible_labelings, least_overlap};
use crate::spectral::merge::{assemble_r, check_row_support};
use crate::spectral::options::EXACT_COMPANION_THRESHOLD;
use crate::spectral::{
    cokernel_factorization, reconstruct_mixture, CokernelFactorization, CompanionshipClasses, Mode, RecoveryOptions,
};
use crate::Scalar;

/// A reconstructed mixture with diagnostics.
#[derive(Clone, Debug)]
pub struct RecoveryReport<T: Scalar> {
    pub mixture: Mixture<T>,
    pub classes: CompanionshipClasses,
    pub r_used: usize,
    /// Chain label of every component.
    pub assignment: Vec<usize>,
    /// Total variation between the input and the reconstructed 3-trail distributions.
    pub residual_trail_error: f64,
    pub warnings: Vec<String>,
}

/// JSON form of a report with 1-based states, labels and components.
#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct RecoveryReportFile<T: Scalar> {
    pub mixture: MixtureFile<T>,
    pub classes: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    pub companions: Vec<usize>,
    pub r_used: usize,
    pub assignment: Vec<usize>,
    pub residual_trail_error: f64,
    pub warnings: Vec<String>,
}

impl<T: Scalar> RecoveryReport<T> {
    pub fn to_file(&self) -> RecoveryReportFile<T> {
        let one = |v: &[usize]| v.iter().map(|x| x + 1).collect::<Vec<_>>();
        RecoveryReportFile {
            mixture: self.mixture.to_file(),
            classes: self.classes.classes.iter().map(|c| one(c)).collect(),
            representatives: one(&self.classes.representatives),
            companions: one(&self.classes.companions),
            r_used: self.r_used,
            assignment: one(&self.assignment),
            residual_trail_error: self.residual_trail_error,
            warnings: self.warnings.clone(),
        }
    }
}

struct Outcome<T: Scalar> {
    mixture: Mixture<T>,
    assignment: Vec<usize>,
    residual: f64,
    warnings: Vec<String>,
}

/// One pass of eigendecomposition, scaling, merging, labeling and
/// reconstruction for a fixed choice of representatives and companions.
fn attempt<T: Scalar>(
    dist: &TrailDistribution<T>,
    fact: &CokernelFactorization<T>,
    pm: &PairMatrices<T>,
    classes: &CompanionshipClasses,
    mode: Mode,
    strict: bool,
    opts: &RecoveryOptions,
) -> Result<Outcome<T>> {
    let tol = &opts.tol;
    let mut warnings = Vec::new();
    let mut tilde = Vec::with_capacity(classes.classes.len());
    for (&j, &i) in classes.representatives.iter().zip(&classes.companions) {
        let rt = eigendecompose_with(pm, j, i, tol, strict, &mut warnings).map_err(|e| e.at("eigendecomposition"))?;
        let (scaled, _) =
            fix_scaling_with(j, &rt, fact, &dist.slice(j)?, tol, strict, &mut warnings).map_err(|e| e.at("scaling"))?;
        tilde.push(scaled);
    }
    let asm = assemble_r(&tilde, fact.r, mode, tol, strict, &mut warnings).map_err(|e| e.at("merging"))?;
    if strict && mode == Mode::Exact {
        check_row_support(&asm, fact, &classes.representatives, tol).map_err(|e| e.at("merging"))?;
    }
    let l = fact.l();
    let labelings = match mode {
        Mode::Exact => {
            let all =
                feasible_labelings(&asm.support, fact.r, l, opts.max_labelings.max(1)).map_err(|e| e.at("labeling"))?;
            if all.is_empty() {
                if strict {
                    return Err(Error::InfeasibleLabeling.at("labeling"));
                }
                let (a, cost) = least_overlap(&asm.support, fact.r, l);
                warnings.push(format!("no exact labeling; least overlap has {cost} collisions"));
                vec![a]
            } else {
                all
            }
        }
        Mode::Noisy => {
            let (a, cost) = least_overlap(&asm.support, fact.r, l);
            if cost > 0 {
                warnings.push(format!("labeling has {cost} collisions"));
            }
            vec![a]
        }
    };
    let mut best: Option<Outcome<T>> = None;
    for a in labelings {
        let (mixture, w) = reconstruct_mixture(&a, &asm, fact, classes, tol).map_err(|e| e.at("reconstruction"))?;
        let residual = trail_error(dist, &exact_trail_distribution(&mixture))?;
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            let mut all = warnings.clone();
            all.extend(w);
            best = Some(Outcome {
                mixture,
                assignment: a,
                residual,
                warnings: all,
            });
        }
    }
    Ok(best.expect("at least one labeling"))
}

fn single_class<T: Scalar>(pm: &PairMatrices<T>, n: usize) -> CompanionshipClasses {
    let all: Vec<usize> = (0..n).collect();
    CompanionshipClasses {
        companions: vec![best_companion(pm, 0, &all)],
        classes: vec![all],
        representatives: vec![0],
        scores: DMatrix::zeros(n, n),
    }
}

/// Runs `attempt` for the given classes and `reps - 1` random re-draws of
/// representatives and companions; keeps the smallest residual.
#[allow(clippy::too_many_arguments)]
fn repeat<T: Scalar>(
    dist: &TrailDistribution<T>,
    fact: &CokernelFactorization<T>,
    pm: &PairMatrices<T>,
    base: &CompanionshipClasses,
    mode: Mode,
    strict: bool,
    reps: usize,
    opts: &RecoveryOptions,
    warnings: &mut Vec<String>,
) -> Result<(Outcome<T>, CompanionshipClasses)> {
    let mut best: Option<(Outcome<T>, CompanionshipClasses)> = None;
    let mut first_err = None;
    for k in 0..reps {
        let mut classes = base.clone();
        if k > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            for (c, members) in classes.classes.iter().enumerate() {
                let rep = members[rng.random_range(0..members.len())];
                let others: Vec<usize> = members.iter().copied().filter(|&x| x != rep).collect();
                let comp = others[rng.random_range(0..others.len())];
                classes.representatives[c] = rep;
                classes.companions[c] = comp;
            }
        }
        match attempt(dist, fact, pm, &classes, mode, strict, opts) {
            Ok(o) => {
                if best.as_ref().is_none_or(|(b, _)| o.residual < b.residual) {
                    best = Some((o, classes));
                }
            }
            Err(e) => {
                if reps > 1 {
                    warnings.push(format!("repetition {}: {e}", k + 1));
                }
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("some repetition ran"))
}

fn run<T: Scalar>(
    dist: &TrailDistribution<T>,
    fact: &CokernelFactorization<T>,
    opts: &RecoveryOptions,
    one_class: bool,
    mut warnings: Vec<String>,
) -> Result<RecoveryReport<T>> {
    let n = fact.n();
    if n != dist.n() {
        return Err(Error::ShapeMismatch(format!(
            "factorization has {n} states, distribution {}",
            dist.n()
        )));
    }
    let mode = opts.resolve_mode(dist.is_exact());
    let strict = opts.resolve_strict(mode);
    let reps = opts.resolve_repetitions(mode);
    warnings.extend(fact.warnings.iter().cloned());
    let pm = PairMatrices::new(fact, opts.tol.rank);

    let (o, classes) = if one_class {
        repeat(
            dist,
            fact,
            &pm,
            &single_class(&pm, n),
            mode,
            strict,
            reps,
            opts,
            &mut warnings,
        )?
    } else {
        match (mode, opts.companion_threshold) {
            (Mode::Noisy, None) => {
                let scores = subspace_scores(fact);
                select_partition(dist, fact, &pm, scores, strict, reps, opts, &mut warnings)?
            }
            _ => {
                let scores = all_scores(&pm, n, opts.tol.rank, opts.probe_scores);
                let threshold = opts.companion_threshold.unwrap_or_else(|| match mode {
                    Mode::Exact => exact_threshold(&scores, EXACT_COMPANION_THRESHOLD),
                    Mode::Noisy => auto_threshold(&scores),
                });
                let base = classes_from_scores(&pm, scores, threshold, mode, strict, &mut warnings)
                    .map_err(|e| e.at("companionship"))?;
                repeat(dist, fact, &pm, &base, mode, strict, reps, opts, &mut warnings)?
            }
        }
    };
    warnings.extend(o.warnings);
    Ok(RecoveryReport {
        mixture: o.mixture,
        classes,
        r_used: fact.r,
        assignment: o.assignment,
        residual_trail_error: o.residual,
        warnings,
    })
}

/// Noisy inputs without a fixed cutoff: every dendrogram cut able to cover
/// `r` components is tried and the one with the smallest residual kept.
#[allow(clippy::too_many_arguments)]
fn select_partition<T: Scalar>(
    dist: &TrailDistribution<T>,
    fact: &CokernelFactorization<T>,
    pm: &PairMatrices<T>,
    scores: DMatrix<f64>,
    strict: bool,
    reps: usize,
    opts: &RecoveryOptions,
    warnings: &mut Vec<String>,
) -> Result<(Outcome<T>, CompanionshipClasses)> {
    let n = fact.n();
    let l = fact.l();
    let k_min = fact.r.div_ceil(l).max(1);
    let k_max = (n / 2).max(k_min);
    let mut best: Option<(Outcome<T>, CompanionshipClasses, Vec<String>)> = None;
    let mut first_err = None;
    for p in candidate_partitions(&scores, k_min, k_max) {
        let mut w = Vec::new();
        let res = classes_from_partition(pm, scores.clone(), p, strict, &mut w)
            .map_err(|e| e.at("companionship"))
            .and_then(|base| {
                if base.classes.len() * l < fact.r {
                    return Err(Error::InvalidArgument("too few classes".into()).at("companionship"));
                }
                repeat(dist, fact, pm, &base, Mode::Noisy, strict, reps, opts, &mut w)
            });
        match res {
            Ok((o, c)) => {
                if best.as_ref().is_none_or(|(b, _, _)| o.residual < b.residual) {
                    best = Some((o, c, w));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((o, c, w)) => {
            warnings.extend(w);
            Ok((o, c))
        }
        None => {
            Err(first_err
                .unwrap_or_else(|| Error::InvalidArgument("no candidate partition".into()).at("companionship")))
        }
    }
}

/// Recovers a mixture of `l` chains from its 3-trail distribution, allowing
/// chains with several connected components. With `r = None` the number of
/// components is estimated from the data.
pub fn ca_svd<T: Scalar>(
    dist: &TrailDistribution<T>,
    l: usize,
    r: Option<usize>,
    opts: &RecoveryOptions,
) -> Result<RecoveryReport<T>> {
    let (r, warnings) = match r {
        Some(r) => (r, Vec::new()),
        None => {
            let est = estimate_r(dist, l).map_err(|e| e.at("estimating r"))?;
            (est.r_hat, est.warnings)
        }
    };
    if r < l {
        return Err(Error::InvalidArgument(format!("r = {r} is smaller than L = {l}")));
    }
    let fact = cokernel_factorization(dist, l, Some(r), opts.tol.ker).map_err(|e| e.at("factorization"))?;
    run(dist, &fact, opts, r == l, warnings)
}

/// The fully connected special case: an `L`-dimensional co-kernel and one
/// class holding every state. Hypothesis violations are warnings unless
/// `opts.strict` says otherwise.
pub fn gkv_svd<T: Scalar>(dist: &TrailDistribution<T>, l: usize, opts: &RecoveryOptions) -> Result<RecoveryReport<T>> {
    let mut opts = opts.clone();
    opts.strict = Some(opts.strict.unwrap_or(false));
    let fact = cokernel_factorization(dist, l, Some(l), opts.tol.ker).map_err(|e| e.at("factorization"))?;
    run(dist, &fact, &opts, true, Vec::new())
}

/// Runs the recovery from a given factorization, e.g. one whose co-kernel
/// basis has been re-mixed.
pub fn recover_from_factorization<T: Scalar>(
    dist: &TrailDistribution<T>,
    fact: &CokernelFactorization<T>,
    opts: &RecoveryOptions,
) -> Result<RecoveryReport<T>> {
    run(dist, fact, opts, fact.r == fact.l(), Vec::new())
}
