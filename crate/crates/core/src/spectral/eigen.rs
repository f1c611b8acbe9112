use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pinv, real_eigen, svd, top_left_subspace, RealEigen};
use crate::model::TrailDistribution;
use crate::spectral::companion::PairMatrices;
use crate::spectral::{CokernelFactorization, Tolerances};
use crate::Scalar;

/// Eigen-decomposition of the rank-`L` matrix `b` restricted to its column
/// space. Returns the eigen data of the `L × L` projection and the basis `U`.
fn restricted_eigen<T: Scalar>(b: &DMatrix<T>, l: usize) -> (RealEigen<T>, DMatrix<T>) {
    let u = top_left_subspace(b, l);
    let c = u.transpose() * b * &u;
    (real_eigen(&c), u)
}

/// Smallest relative gap between the `L` dominant eigenvalues of `b`.
pub(crate) fn pair_gap<T: Scalar>(b: &DMatrix<T>, l: usize) -> f64 {
    if l == 1 {
        return f64::INFINITY;
    }
    restricted_eigen(b, l).0.min_rel_gap
}

/// Unscaled `R̃′_j` (`L × r`) for representative `j` and companion `i`:
/// its rows are the eigenvectors of `B_{ij} = K_j† K_i` with non-zero
/// eigenvalue, ordered by decreasing eigenvalue.
///
/// When `strict`, repeated or complex eigenvalues are errors; otherwise they
/// are reported in `warnings` and the real parts are used.
pub(crate) fn eigendecompose_with<T: Scalar>(
    pm: &PairMatrices<T>,
    j: usize,
    i: usize,
    tol: &Tolerances,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<DMatrix<T>> {
    let l = pm.l;
    let b = pm.b(i, j);
    let (eig, u) = restricted_eigen(&b, l);
    if eig.max_rel_imag > tol.imag {
        let e = Error::NonRealSpectrum {
            state: j,
            companion: i,
            imag: eig.max_rel_imag,
        };
        if strict {
            return Err(e);
        }
        warnings.push(e.to_string());
    }
    if l > 1 && eig.min_rel_gap < tol.eig {
        let e = Error::StartingRatioDegeneracy {
            state: j,
            companion: i,
            gap: eig.min_rel_gap,
        };
        if strict {
            return Err(e);
        }
        warnings.push(e.to_string());
    }
    let y = &u * &eig.vectors;
    Ok(y.transpose())
}

/// Public form of [`eigendecompose_with`] working from a factorization.
pub fn eigendecompose_pair<T: Scalar>(
    j: usize,
    i: usize,
    fact: &CokernelFactorization<T>,
    tol: &Tolerances,
) -> Result<DMatrix<T>> {
    let pm = PairMatrices::new(fact, tol.rank);
    let mut w = Vec::new();
    eigendecompose_with(&pm, j, i, tol, true, &mut w)
}

/// Rescales the rows of `R̃′_j` so that the column sums of
/// `R̃_j Y′_j P′_j` reproduce `O_j 1_n`. Returns `R̃_j` and the factors `d`.
pub fn fix_scaling<T: Scalar>(
    j: usize,
    rt: &DMatrix<T>,
    fact: &CokernelFactorization<T>,
    dist: &TrailDistribution<T>,
    tol: &Tolerances,
) -> Result<(DMatrix<T>, DVector<T>)> {
    let mut w = Vec::new();
    fix_scaling_with(j, rt, fact, &dist.slice(j)?, tol, true, &mut w)
}

pub(crate) fn fix_scaling_with<T: Scalar>(
    j: usize,
    rt: &DMatrix<T>,
    fact: &CokernelFactorization<T>,
    o: &DMatrix<T>,
    tol: &Tolerances,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<(DMatrix<T>, DVector<T>)> {
    let l = rt.nrows();
    let x = rt * &fact.yp[j] * &fact.pp[j];
    let sv = svd(&x).sigma;
    let s1 = sv.get(0).map_or(0.0, |v| v.to_f());
    let sl = sv.get(l - 1).map_or(0.0, |v| v.to_f());
    if s1 == 0.0 || sl < tol.rank * s1 {
        let e = Error::ScalingUnderdetermined { state: j };
        if strict || s1 == 0.0 {
            return Err(e);
        }
        warnings.push(e.to_string());
    }
    let target = o.column_sum();
    let d = pinv(&x.transpose(), None, T::of(tol.rank)) * target;
    let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.to_f().abs()));
    for v in d.iter() {
        if v.to_f().abs() < tol.scale * dmax || dmax == 0.0 {
            let e = Error::VanishingScale {
                state: j,
                value: v.to_f().abs(),
            };
            if strict || dmax == 0.0 {
                return Err(e);
            }
            warnings.push(e.to_string());
            break;
        }
    }
    let mut scaled = rt.clone();
    for t in 0..l {
        scaled.row_mut(t).scale_mut(d[t]);
    }
    Ok((scaled, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};
    use crate::spectral::cokernel_factorization;

    #[test]
    fn appendix_uniform_starts_are_degenerate() {
        let d = exact_trail_distribution(&appendix_mixture());
        let f = cokernel_factorization(&d, 2, None, 1e-8).unwrap();
        let err = eigendecompose_pair(0, 1, &f, &Tolerances::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::StartingRatioDegeneracy {
                state: 0,
                companion: 1,
                ..
            }
        ));
    }
}
