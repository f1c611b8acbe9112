use nalgebra::{DMatrix, DVector};

use crate::model::Mixture;
use crate::spectral::build_shuffle_matrix;
use crate::Scalar;

/// The true per-state factors of a mixture.
///
/// `p[j](ℓ, i) = s^ℓ_i M^ℓ_{ij}`, `q[j](ℓ, k) = s^ℓ_j M^ℓ_{jk}`,
/// `s[j][ℓ] = s^ℓ_j` and `mplus[j](ℓ, k) = M^ℓ_{jk}`.
#[derive(Clone, Debug)]
pub struct GroundTruthFactors<T: Scalar> {
    pub p: Vec<DMatrix<T>>,
    pub q: Vec<DMatrix<T>>,
    pub s: Vec<DVector<T>>,
    pub mplus: Vec<DMatrix<T>>,
}

pub fn ground_truth_factors<T: Scalar>(mixture: &Mixture<T>) -> GroundTruthFactors<T> {
    let n = mixture.n();
    let l = mixture.l();
    let p = (0..n)
        .map(|j| DMatrix::from_fn(l, n, |c, i| mixture.s(c, i) * mixture.m(c, i, j)))
        .collect();
    let q = (0..n)
        .map(|j| DMatrix::from_fn(l, n, |c, k| mixture.s(c, j) * mixture.m(c, j, k)))
        .collect();
    let s = (0..n).map(|j| DVector::from_fn(l, |c, _| mixture.s(c, j))).collect();
    let mplus = (0..n)
        .map(|j| DMatrix::from_fn(l, n, |c, k| mixture.m(c, j, k)))
        .collect();
    GroundTruthFactors { p, q, s, mplus }
}

impl<T: Scalar> GroundTruthFactors<T> {
    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// `P_jᵀ S_j⁻¹ Q_j`, or `None` when some `s^ℓ_j` is zero.
    pub fn o_from_factors(&self, j: usize) -> Option<DMatrix<T>> {
        if self.s[j].iter().any(|&x| x <= T::zero()) {
            return None;
        }
        let inv = DMatrix::from_diagonal(&self.s[j].map(|x| T::one() / x));
        Some(self.p[j].transpose() * inv * &self.q[j])
    }

    /// `P_jᵀ M⁺_j`, which equals `O_j` even when starts vanish.
    pub fn o_from_transitions(&self, j: usize) -> DMatrix<T> {
        self.p[j].transpose() * &self.mplus[j]
    }

    /// The shuffle matrix built from the true factors.
    pub fn shuffle_matrix(&self) -> DMatrix<T> {
        build_shuffle_matrix(&self.p, &self.q).expect("factor shapes are consistent")
    }
}
