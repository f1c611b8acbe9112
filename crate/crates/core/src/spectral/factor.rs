use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{fro, svd, SortedSvd};
use crate::model::TrailDistribution;
use crate::Scalar;

/// Rank-`L` factors of every slice `O_j ≈ P′_jᵀ Q′_j`.
#[derive(Clone, Debug)]
pub struct SvdFactors<T: Scalar> {
    /// `P′_j` (`L × n`): top-`L` left singular vectors as rows.
    pub pp: Vec<DMatrix<T>>,
    /// `Q′_j` (`L × n`): top-`L` singular values times right singular vectors.
    pub qp: Vec<DMatrix<T>>,
    /// All singular values of each `O_j`, decreasing.
    pub svals: Vec<DVector<T>>,
    /// States whose slice carries no mass.
    pub unvisited: Vec<usize>,
}

/// Factors plus a basis of the co-kernel of the shuffle matrix built from them.
#[derive(Clone, Debug)]
pub struct CokernelFactorization<T: Scalar> {
    pub pp: Vec<DMatrix<T>>,
    pub qp: Vec<DMatrix<T>>,
    /// `Y′_j` (`r × L`).
    pub yp: Vec<DMatrix<T>>,
    /// `Z′_j` (`r × L`).
    pub zp: Vec<DMatrix<T>>,
    pub r: usize,
    pub svals: Vec<DVector<T>>,
    /// Singular values of the shuffle matrix, decreasing.
    pub shuffle_svals: DVector<T>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> CokernelFactorization<T> {
    pub fn n(&self) -> usize {
        self.pp.len()
    }

    pub fn l(&self) -> usize {
        self.pp.first().map_or(0, |p| p.nrows())
    }

    /// The basis as the rows of an `r × 2Ln` matrix.
    pub fn basis(&self) -> DMatrix<T> {
        join_basis(&self.yp, &self.zp)
    }

    /// Replaces the basis rows by `g · basis` for an invertible `r × r` matrix `g`.
    pub fn remixed(&self, g: &DMatrix<T>) -> Self {
        let mut out = self.clone();
        out.yp = self.yp.iter().map(|y| g * y).collect();
        out.zp = self.zp.iter().map(|z| g * z).collect();
        out
    }
}

/// Truncated SVD of every slice. Slices with no mass get zero factors.
pub fn svd_factor<T: Scalar>(dist: &TrailDistribution<T>, l: usize) -> Result<SvdFactors<T>> {
    let n = dist.n();
    if l == 0 || 2 * l > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= L <= n/2, got L = {l}, n = {n}"
        )));
    }
    let slices = dist.slices();
    let parts: Vec<(DMatrix<T>, DMatrix<T>, DVector<T>, bool)> = slices
        .par_iter()
        .map(|o| {
            if fro(o) == T::zero() {
                return (DMatrix::zeros(l, n), DMatrix::zeros(l, n), DVector::zeros(n), true);
            }
            let SortedSvd { u, sigma, v_t } = svd(o);
            let pp = u.columns(0, l).transpose();
            let mut qp = v_t.rows(0, l).into_owned();
            for t in 0..l {
                qp.row_mut(t).scale_mut(sigma[t]);
            }
            (pp, qp, sigma, false)
        })
        .collect();
    let mut out = SvdFactors {
        pp: Vec::with_capacity(n),
        qp: Vec::with_capacity(n),
        svals: Vec::with_capacity(n),
        unvisited: Vec::new(),
    };
    for (j, (pp, qp, s, empty)) in parts.into_iter().enumerate() {
        out.pp.push(pp);
        out.qp.push(qp);
        out.svals.push(s);
        if empty {
            out.unvisited.push(j);
        }
    }
    Ok(out)
}

/// Shuffle matrix of `2Ln × n²`.
///
/// Row `(j, ℓ, +)` is `j·L + ℓ` and row `(i, ℓ, −)` is `Ln + i·L + ℓ`;
/// column `(i, j)` is `i·n + j`. The column holds `P_j(·, i)` in the `+` rows
/// of `j` and `−Q_i(·, j)` in the `−` rows of `i`.
pub fn build_shuffle_matrix<T: Scalar>(p: &[DMatrix<T>], q: &[DMatrix<T>]) -> Result<DMatrix<T>> {
    let n = p.len();
    if n == 0 || q.len() != n {
        return Err(Error::ShapeMismatch(format!("{} P blocks, {} Q blocks", n, q.len())));
    }
    let l = p[0].nrows();
    for m in p.iter().chain(q) {
        if m.nrows() != l || m.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "factor is {}x{}, expected {l}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let ln = l * n;
    let mut a = DMatrix::zeros(2 * ln, n * n);
    for i in 0..n {
        for j in 0..n {
            let col = i * n + j;
            for c in 0..l {
                a[(j * l + c, col)] += p[j][(c, i)];
                a[(ln + i * l + c, col)] -= q[i][(c, j)];
            }
        }
    }
    Ok(a)
}

/// Left singular vectors of the `r` smallest singular values as rows, plus
/// all singular values (decreasing).
///
/// Without `r_hint`, `r` is the number of singular values at most `tol · σ₁`;
/// finding none is an error.
pub fn cokernel_basis<T: Scalar>(a: &DMatrix<T>, r_hint: Option<usize>, tol: f64) -> Result<(DMatrix<T>, DVector<T>)> {
    let rows = a.nrows();
    let d = svd(a);
    // a tall matrix has left null directions the thin SVD does not return
    let (u, sigma) = if d.u.ncols() < rows {
        let full = svd(&(a * a.transpose()));
        let mut s = DVector::zeros(rows);
        for k in 0..d.sigma.len() {
            s[k] = d.sigma[k];
        }
        (full.u, s)
    } else {
        (d.u, d.sigma)
    };
    let r = match r_hint {
        Some(r) => {
            if r == 0 || r > rows {
                return Err(Error::InvalidArgument(format!("r = {r} outside 1..={rows}")));
            }
            r
        }
        None => {
            let s1 = sigma.get(0).map_or(0.0, |x| x.to_f());
            let r = sigma.iter().filter(|x| x.to_f() <= tol * s1).count();
            if r == 0 {
                return Err(Error::CannotDetermineR(format!(
                    "no singular value below {tol:e} relative to the largest"
                )));
            }
            r
        }
    };
    let basis = u.columns(rows - r, r).transpose();
    Ok((basis, sigma))
}

/// Splits `r × 2Ln` basis rows into the blocks `Y′_j`, `Z′_j`.
pub fn split_basis<T: Scalar>(basis: &DMatrix<T>, n: usize, l: usize) -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
    let ln = l * n;
    let yp = (0..n).map(|j| basis.columns(j * l, l).into_owned()).collect();
    let zp = (0..n).map(|j| basis.columns(ln + j * l, l).into_owned()).collect();
    (yp, zp)
}

fn join_basis<T: Scalar>(yp: &[DMatrix<T>], zp: &[DMatrix<T>]) -> DMatrix<T> {
    let n = yp.len();
    let r = yp.first().map_or(0, |y| y.nrows());
    let l = yp.first().map_or(0, |y| y.ncols());
    let ln = l * n;
    let mut out = DMatrix::zeros(r, 2 * ln);
    for j in 0..n {
        out.columns_mut(j * l, l).copy_from(&yp[j]);
        out.columns_mut(ln + j * l, l).copy_from(&zp[j]);
    }
    out
}

/// Full factorization: truncated SVDs, shuffle matrix and its co-kernel.
pub fn cokernel_factorization<T: Scalar>(
    dist: &TrailDistribution<T>,
    l: usize,
    r: Option<usize>,
    tol_ker: f64,
) -> Result<CokernelFactorization<T>> {
    let f = svd_factor(dist, l)?;
    let mut warnings: Vec<String> = f
        .unvisited
        .iter()
        .map(|j| format!("unvisited state {}", j + 1))
        .collect();
    let a = build_shuffle_matrix(&f.pp, &f.qp)?;
    let (basis, shuffle_svals) = cokernel_basis(&a, r, tol_ker)?;
    let r = basis.nrows();
    let scale = shuffle_svals.get(0).map_or(0.0, |x| x.to_f());
    let worst = (0..r)
        .map(|q| (basis.row(q) * &a).norm().to_f())
        .fold(0.0_f64, f64::max);
    if worst > tol_ker * scale {
        warnings.push(format!(
            "co-kernel residual {:.3e} exceeds {:.1e} relative to the largest singular value",
            worst / scale.max(f64::MIN_POSITIVE),
            tol_ker
        ));
    }
    let (yp, zp) = split_basis(&basis, dist.n(), l);
    Ok(CokernelFactorization {
        pp: f.pp,
        qp: f.qp,
        yp,
        zp,
        r,
        svals: f.svals,
        shuffle_svals,
        warnings,
    })
}
