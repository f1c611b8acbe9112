//! Choosing `L` and `r` from data, and numerical checks of the singular-value bounds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sigma_k, singular_values};
use crate::model::{component_structure, ground_truth_factors, verify_recoverability, Mixture, TrailDistribution};
use crate::spectral::{build_shuffle_matrix, svd_factor};
use crate::Scalar;

/// Averaged singular values of the slices and the chosen number of chains.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    /// `σ̄_i = (1/n) Σ_j σ_i(O_j)`, decreasing.
    pub sigma_bar: Vec<f64>,
    /// `(σ̄_i + ε)/(σ̄_{i+1} + ε)` for `i = 1..n-1`, with `ε = 1e-12 σ̄_1`.
    pub ratios: Vec<f64>,
    pub chosen_l: usize,
    pub per_state: Vec<Vec<f64>>,
}

impl SpectrumSummary {
    /// CSV with header `i,sigma_bar,ratio`; the last row has an empty ratio.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,sigma_bar,ratio\n");
        for (i, s) in self.sigma_bar.iter().enumerate() {
            let ratio = self.ratios.get(i).map_or(String::new(), |r| format!("{r:.16e}"));
            out.push_str(&format!("{},{s:.16e},{ratio}\n", i + 1));
        }
        out
    }
}

pub const SPECTRUM_FLOOR: f64 = 1e-12;

/// Picks `L` as the `i ≤ n/2` maximising `(σ̄_i + ε)/(σ̄_{i+1} + ε)`;
/// ties go to the smaller `i`.
pub fn spectrum_summary<T: Scalar>(dist: &TrailDistribution<T>) -> Result<SpectrumSummary> {
    spectrum_summary_with(dist, SPECTRUM_FLOOR)
}

pub fn spectrum_summary_with<T: Scalar>(dist: &TrailDistribution<T>, floor: f64) -> Result<SpectrumSummary> {
    let n = dist.n();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two states".into()));
    }
    let per_state: Vec<Vec<f64>> = dist
        .slices()
        .iter()
        .map(|o| singular_values(o).iter().map(|x| x.to_f()).collect())
        .collect();
    let sigma_bar: Vec<f64> = (0..n)
        .map(|i| per_state.iter().map(|s| s[i]).sum::<f64>() / n as f64)
        .collect();
    let eps = floor * sigma_bar[0];
    if !(sigma_bar[0] > 0.0) || !eps.is_finite() {
        return Err(Error::EmptySpectrum);
    }
    let ratios: Vec<f64> = sigma_bar.windows(2).map(|w| (w[0] + eps) / (w[1] + eps)).collect();
    let mut chosen_l = 1;
    for i in 1..=n / 2 {
        if ratios[i - 1] > ratios[chosen_l - 1] {
            chosen_l = i;
        }
    }
    Ok(SpectrumSummary {
        sigma_bar,
        ratios,
        chosen_l,
        per_state,
    })
}

/// Bounds on `σ_L(O_j)` from the factors `P_j` and `M⁺_j`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DegenBounds {
    /// `σ_L(P_j) σ_L(M⁺_j)`.
    pub lower: f64,
    pub sigma_l_oj: f64,
    /// `√L · min(σ_L(P_j), σ_L(M⁺_j))`.
    pub upper: f64,
    /// `lower ≤ σ_L(O_j) ≤ upper` up to `1e-10`.
    pub holds: bool,
}

pub fn degen_bounds<T: Scalar>(mixture: &Mixture<T>, j: usize) -> Result<DegenBounds> {
    let n = mixture.n();
    if j >= n {
        return Err(Error::StateOutOfRange { index: j, n });
    }
    let l = mixture.l();
    let f = ground_truth_factors(mixture);
    let sp = sigma_k(&f.p[j], l).to_f();
    let sm = sigma_k(&f.mplus[j], l).to_f();
    let so = sigma_k(&f.o_from_transitions(j), l).to_f();
    let lower = sp * sm;
    let upper = (l as f64).sqrt() * sp.min(sm);
    Ok(DegenBounds {
        lower,
        sigma_l_oj: so,
        upper,
        holds: lower <= so + 1e-10 && so <= upper + 1e-10,
    })
}

/// Estimated number of components with the evidence behind it.
#[derive(Clone, Debug, Serialize)]
pub struct REstimate {
    pub r_hat: usize,
    /// Singular values of the shuffle matrix built from the data, decreasing.
    pub singular_values: Vec<f64>,
    /// The ratio at the chosen gap.
    pub gap_ratio: f64,
    pub warnings: Vec<String>,
}

/// Estimates `r` as the number of trailing singular values of the data
/// shuffle matrix after the largest ratio between consecutive values in the
/// tail window of the last `2L·min(n, 8)` values. At least `L` is returned.
pub fn estimate_r<T: Scalar>(dist: &TrailDistribution<T>, l: usize) -> Result<REstimate> {
    let n = dist.n();
    let f = svd_factor(dist, l)?;
    let a = build_shuffle_matrix(&f.pp, &f.qp)?;
    let rows = a.nrows();
    let mut sv: Vec<f64> = singular_values(&a).iter().map(|x| x.to_f()).collect();
    sv.resize(rows, 0.0);
    let eps = rows as f64 * f64::EPSILON * sv[0];
    let window = rows.min(2 * l * n.min(8));
    // gap between positions k and k + 1 leaves rows - k - 1 trailing values
    let lo = rows - window;
    let hi = rows - l - 1;
    let mut best = (f64::NEG_INFINITY, hi);
    for k in lo..=hi {
        let ratio = (sv[k] + eps) / (sv[k + 1] + eps);
        if ratio > best.0 {
            best = (ratio, k);
        }
    }
    let r_hat = rows - best.1 - 1;
    let mut warnings = Vec::new();
    if best.0 < 10.0 {
        warnings.push(format!("ambiguous r: largest singular-value ratio {:.3}", best.0));
    }
    Ok(REstimate {
        r_hat,
        singular_values: sv,
        gap_ratio: best.0,
        warnings,
    })
}

/// Transitions across a cut of the doubled vertex set.
///
/// Vertices are indexed `i⁻ → i` and `j⁺ → n + j`. Only the columns
/// `(i⁻, j⁺)` whose endpoints lie on different sides are stored.
#[derive(Clone, Debug)]
pub struct CutMatrix {
    pub n: usize,
    pub l: usize,
    pub cut: Vec<bool>,
    /// `((i, j), column)` with `column[ℓ] = s^ℓ_i M^ℓ_{ij}`.
    pub columns: Vec<((usize, usize), DVector<f64>)>,
}

impl CutMatrix {
    pub fn size(&self) -> usize {
        self.cut.iter().filter(|&&x| x).count()
    }

    /// `L × (2n)²`, column `a · 2n + b` for vertices `a`, `b`.
    pub fn dense(&self) -> DMatrix<f64> {
        let v = 2 * self.n;
        let mut m = DMatrix::zeros(self.l, v * v);
        for &((i, j), ref col) in &self.columns {
            m.set_column(i * v + self.n + j, col);
        }
        m
    }

    /// The crossing columns side by side (`L × #crossing`).
    pub fn compact(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.l, self.columns.len());
        for (c, (_, col)) in self.columns.iter().enumerate() {
            m.set_column(c, col);
        }
        m
    }

    /// `σ_L(Q_S)`.
    pub fn sigma_l(&self) -> f64 {
        if self.columns.len() < self.l {
            return 0.0;
        }
        sigma_k(&self.compact(), self.l)
    }
}

pub fn cut_matrix<T: Scalar>(mixture: &Mixture<T>, cut: &[bool]) -> Result<CutMatrix> {
    let n = mixture.n();
    let l = mixture.l();
    if cut.len() != 2 * n {
        return Err(Error::InvalidCut(format!(
            "expected {} vertices, got {}",
            2 * n,
            cut.len()
        )));
    }
    let size = cut.iter().filter(|&&x| x).count();
    if size == 0 || size == 2 * n {
        return Err(Error::InvalidCut("cut must be a proper non-empty subset".into()));
    }
    let mut columns = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if cut[i] != cut[n + j] {
                let col = DVector::from_fn(l, |c, _| (mixture.s(c, i) * mixture.m(c, i, j)).to_f());
                columns.push(((i, j), col));
            }
        }
    }
    Ok(CutMatrix {
        n,
        l,
        cut: cut.to_vec(),
        columns,
    })
}

/// Both readings of the cut bound on the shuffle matrix.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SigmaBound {
    /// `σ_{2Ln−r}(A)`.
    pub lhs: f64,
    /// `σ_L(Q_S) / |S|`.
    pub rhs: f64,
    /// `lhs ≤ rhs + 1e-10`.
    pub holds_printed: bool,
    /// `lhs² ≤ rhs + 1e-10`.
    pub holds_squared: bool,
}

fn sigma_2ln_minus_r<T: Scalar>(mixture: &Mixture<T>, r: usize) -> f64 {
    let a = ground_truth_factors(mixture).shuffle_matrix();
    let rows = a.nrows();
    if r >= rows {
        return 0.0;
    }
    sigma_k(&a, rows - r).to_f()
}

/// Requires a companion-connected mixture whose co-kernel is spanned by the
/// component indicators.
pub fn sigma_bound_check<T: Scalar>(mixture: &Mixture<T>, cut: &[bool]) -> Result<SigmaBound> {
    let rep = verify_recoverability(mixture, 1e-8);
    if !rep.companion_connected || !rep.cokernel_dim_equals_r {
        return Err(Error::InvalidMixture(format!(
            "bound needs a companion-connected mixture with co-kernel dimension r: {}",
            rep.notes.join("; ")
        )));
    }
    let q = cut_matrix(mixture, cut)?;
    let lhs = sigma_2ln_minus_r(mixture, rep.r);
    let rhs = q.sigma_l() / q.size() as f64;
    Ok(SigmaBound {
        lhs,
        rhs,
        holds_printed: lhs <= rhs + 1e-10,
        holds_squared: lhs * lhs <= rhs + 1e-10,
    })
}

/// Squared singular value against the distance between two chains.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TvBound {
    /// `σ²_{2Ln−r}(A)`.
    pub lhs_sq: f64,
    /// `(1/2n) Σ_{i,j} |M^ℓ_{ij} − M^{ℓ′}_{ij}|`.
    pub tv: f64,
    pub holds: bool,
}

pub fn tv_bound_check<T: Scalar>(mixture: &Mixture<T>, a: usize, b: usize) -> Result<TvBound> {
    let l = mixture.l();
    if a >= l || b >= l || a == b {
        return Err(Error::InvalidArgument(format!("need two distinct chains below {l}")));
    }
    let n = mixture.n();
    let r = component_structure(mixture).r();
    let s = sigma_2ln_minus_r(mixture, r);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += (mixture.m(a, i, j) - mixture.m(b, i, j)).to_f().abs();
        }
    }
    let tv = sum / (2 * n) as f64;
    Ok(TvBound {
        lhs_sq: s * s,
        tv,
        holds: s * s <= tv + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};

    #[test]
    fn single_chain_picks_one() {
        let m = Mixture::new(
            DMatrix::from_row_slice(1, 4, &[0.1, 0.2, 0.3, 0.4]),
            vec![DMatrix::from_fn(4, 4, |i, j| ((i + j) % 4 + 1) as f64 / 10.0)],
        )
        .unwrap();
        let s = spectrum_summary(&exact_trail_distribution(&m)).unwrap();
        assert_eq!(s.chosen_l, 1);
        for w in s.sigma_bar.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn appendix_r_and_bounds() {
        let m = appendix_mixture();
        let est = estimate_r(&exact_trail_distribution(&m), 2).unwrap();
        assert_eq!(est.r_hat, 3);
        let b = degen_bounds(&m, 0).unwrap();
        assert!(b.holds);
        assert!(b.lower <= b.sigma_l_oj && b.sigma_l_oj <= b.upper);
    }

    #[test]
    fn singleton_cut_columns() {
        let m = appendix_mixture();
        let mut cut = vec![false; 8];
        cut[1] = true; // state 2, minus copy
        let q = cut_matrix(&m, &cut).unwrap();
        assert_eq!(q.columns.len(), 4);
        assert!(q.columns.iter().all(|&((i, _), _)| i == 1));
        assert!(cut_matrix(&m, &[false; 8]).is_err());
        assert!(cut_matrix(&m, &[true; 8]).is_err());
    }

    #[test]
    fn dense_and_compact_products_agree() {
        let m = appendix_mixture();
        let cut = vec![true, false, true, false, false, true, true, false];
        let q = cut_matrix(&m, &cut).unwrap();
        let w = DMatrix::from_row_slice(1, 2, &[0.3, -1.1]);
        let a = (&w * q.dense()).norm();
        let b = (&w * q.compact()).norm();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_chains_force_zero() {
        let m1 = DMatrix::from_fn(4, 4, |i, j| ((i * 3 + j) % 5 + 1) as f64);
        let m1 = DMatrix::from_fn(4, 4, |i, j| m1[(i, j)] / m1.row(i).sum());
        let start = DMatrix::from_row_slice(2, 4, &[0.05, 0.1, 0.15, 0.2, 0.12, 0.08, 0.14, 0.16]);
        let mix = Mixture::new(start, vec![m1.clone(), m1]).unwrap();
        let b = tv_bound_check(&mix, 0, 1).unwrap();
        assert_eq!(b.tv, 0.0);
        assert!(b.lhs_sq.sqrt() <= 1e-8);
        assert!(b.holds);
    }
}
