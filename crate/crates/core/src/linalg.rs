//! Thin helpers over nalgebra's decompositions.

use nalgebra::{DMatrix, DVector};

use crate::Scalar;

/// Singular value decomposition with singular values sorted in decreasing order.
pub struct SortedSvd<T: Scalar> {
    /// `rows × k` with `k = min(rows, cols)`.
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    /// `k × cols`.
    pub v_t: DMatrix<T>,
}

fn to_faer<T: Scalar>(m: &DMatrix<T>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].to_f())
}

fn sequential() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Thin SVD, computed in double precision.
pub fn svd<T: Scalar>(m: &DMatrix<T>) -> SortedSvd<T> {
    let k = m.nrows().min(m.ncols());
    if k == 0 || m.iter().all(|x| *x == T::zero()) {
        return SortedSvd {
            u: DMatrix::identity(m.nrows(), k),
            sigma: DVector::zeros(k),
            v_t: DMatrix::identity(k, m.ncols()),
        };
    }
    sequential();
    let d = to_faer(m).thin_svd().expect("svd converges");
    let (u, s, v) = (d.U(), d.S().column_vector(), d.V());
    SortedSvd {
        u: DMatrix::from_fn(m.nrows(), k, |i, j| T::of(u[(i, j)])),
        sigma: DVector::from_fn(k, |i, _| T::of(s[i])),
        v_t: DMatrix::from_fn(k, m.ncols(), |i, j| T::of(v[(j, i)])),
    }
}

/// Singular values in decreasing order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let k = m.nrows().min(m.ncols());
    if k == 0 || m.iter().all(|x| *x == T::zero()) {
        return DVector::zeros(k);
    }
    sequential();
    let s = to_faer(m).singular_values().expect("svd converges");
    DVector::from_iterator(k, s.into_iter().map(T::of))
}

/// `k`-th largest singular value (1-based), zero when the matrix has fewer.
pub fn sigma_k<T: Scalar>(m: &DMatrix<T>, k: usize) -> T {
    let s = singular_values(m);
    if k == 0 || k > s.len() {
        T::zero()
    } else {
        s[k - 1]
    }
}

/// Moore-Penrose pseudoinverse keeping at most `max_rank` singular values,
/// and only those at least `rel_tol · σ₁`.
pub fn pinv<T: Scalar>(m: &DMatrix<T>, max_rank: Option<usize>, rel_tol: T) -> DMatrix<T> {
    let d = svd(m);
    let k = d.sigma.len();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    if k == 0 {
        return out;
    }
    let cutoff = d.sigma[0] * rel_tol;
    let keep = max_rank.unwrap_or(k).min(k);
    for t in 0..keep {
        let s = d.sigma[t];
        if s <= cutoff || s <= T::zero() {
            break;
        }
        let inv = T::one() / s;
        // out += v_t[t]^T * inv * u[:,t]^T
        for c in 0..m.nrows() {
            let uc = d.u[(c, t)] * inv;
            if uc == T::zero() {
                continue;
            }
            for r in 0..m.ncols() {
                out[(r, c)] += d.v_t[(t, r)] * uc;
            }
        }
    }
    out
}

/// Orthonormal basis (as columns) of the span of the top-`k` left singular vectors.
pub fn top_left_subspace<T: Scalar>(m: &DMatrix<T>, k: usize) -> DMatrix<T> {
    let d = svd(m);
    d.u.columns(0, k.min(d.u.ncols())).into_owned()
}

/// Eigen-decomposition of a small non-symmetric matrix with (expected) real spectrum.
pub struct RealEigen<T: Scalar> {
    /// Eigenvalues in decreasing order.
    pub values: Vec<T>,
    /// Unit right eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<T>,
    /// Largest `|Im λ|` relative to `max |λ|`.
    pub max_rel_imag: f64,
    /// Smallest `|λ_a − λ_b|` relative to `max |λ|`; infinite for 1×1.
    pub min_rel_gap: f64,
}

pub fn real_eigen<T: Scalar>(c: &DMatrix<T>) -> RealEigen<T> {
    let n = c.nrows();
    if n == 0 {
        return RealEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
            max_rel_imag: 0.0,
            min_rel_gap: f64::INFINITY,
        };
    }
    sequential();
    let e = to_faer(c).eigen().expect("eigen decomposition converges");
    let (vals, vecs) = (e.S().column_vector(), e.U());
    let scale = (0..n)
        .map(|k| vals[k].norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let max_rel_imag = (0..n).map(|k| vals[k].im.abs() / scale).fold(0.0_f64, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].re.total_cmp(&vals[a].re));
    let values: Vec<T> = order.iter().map(|&k| T::of(vals[k].re)).collect();
    let mut min_rel_gap = f64::INFINITY;
    for w in values.windows(2) {
        min_rel_gap = min_rel_gap.min((w[0] - w[1]).to_f().abs() / scale);
    }
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        // rotate the complex vector so its largest entry is real, then keep the real part
        let big = (0..n)
            .max_by(|&a, &b| vecs[(a, k)].norm().total_cmp(&vecs[(b, k)].norm()))
            .expect("n > 0");
        let phase = vecs[(big, k)].conj() / vecs[(big, k)].norm();
        let v = DVector::from_fn(n, |i, _| (vecs[(i, k)] * phase).re);
        let norm = v.norm();
        vectors.set_column(col, &v.map(|x| T::of(x / norm)));
    }
    RealEigen {
        values,
        vectors,
        max_rel_imag,
        min_rel_gap,
    }
}

/// Frobenius norm.
pub fn fro<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}
