use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::Mixture;
use crate::spectral::{Assembly, CokernelFactorization, CompanionshipClasses, Tolerances};
use crate::Scalar;

/// Builds the mixture from the merged change of basis and a labeling.
///
/// For each state `j`, the rows of `ΠR Y′_j` and `ΠR Z′_j` on the components
/// of its class are placed by label into `Y_j` and `Z_j`. Then
/// `s_j = diag(Z_j Y_jᵀ)`, `P_j = Y_j P′_j` and `M^ℓ_{ij} = P_j(ℓ, i) / s^ℓ_i`.
/// Negative entries are clipped and rows renormalised.
pub fn reconstruct_mixture<T: Scalar>(
    assignment: &[usize],
    asm: &Assembly<T>,
    fact: &CokernelFactorization<T>,
    classes: &CompanionshipClasses,
    tol: &Tolerances,
) -> Result<(Mixture<T>, Vec<String>)> {
    let n = fact.n();
    let l = fact.l();
    let mut warnings = Vec::new();
    let mut start = DMatrix::zeros(l, n);
    let mut p = Vec::with_capacity(n);
    for j in 0..n {
        let c = classes.class_of(j);
        let support = &asm.support[c];
        let ry = &asm.pi_r * &fact.yp[j];
        let rz = &asm.pi_r * &fact.zp[j];
        let mut y = DMatrix::zeros(l, l);
        let mut z = DMatrix::zeros(l, l);
        let mut placed: Vec<Option<T>> = vec![None; l];
        for &q in support {
            let lab = assignment[q];
            let norm = ry.row(q).norm();
            if let Some(prev) = placed[lab] {
                warnings.push(format!("state {}: label {} assigned twice", j + 1, lab + 1));
                if norm <= prev {
                    continue;
                }
            }
            placed[lab] = Some(norm);
            y.set_row(lab, &ry.row(q));
            z.set_row(lab, &rz.row(q));
        }
        for (lab, slot) in placed.iter().enumerate() {
            if slot.is_none() {
                warnings.push(format!("state {}: no component carries label {}", j + 1, lab + 1));
            }
        }
        let s = &z * y.transpose();
        for lab in 0..l {
            start[(lab, j)] = s[(lab, lab)];
        }
        p.push(&y * &fact.pp[j]);
    }
    let tau = T::of(tol.start);
    let mut chains = vec![DMatrix::zeros(n, n); l];
    for lab in 0..l {
        for i in 0..n {
            let s = start[(lab, i)];
            let row = DVector::from_fn(n, |j, _| p[j][(lab, i)]);
            let denom = if s >= tau {
                Some(s)
            } else {
                let sum = row.sum();
                if sum >= tau {
                    warnings.push(format!(
                        "start of state {} in chain {} is {:.3e}; dividing by the row sum",
                        i + 1,
                        lab + 1,
                        s.to_f()
                    ));
                    Some(sum)
                } else {
                    None
                }
            };
            match denom {
                Some(d) => {
                    for j in 0..n {
                        chains[lab][(i, j)] = row[j] / d;
                    }
                }
                None => {
                    warnings.push(format!("starved start: state {} in chain {}", i + 1, lab + 1));
                    chains[lab].row_mut(i).fill(T::one() / T::of(n as f64));
                }
            }
        }
    }
    let (mixture, clipped) = Mixture::sanitized(start, chains)?;
    if clipped > 0 {
        warnings.push(format!("clipped {clipped} negative entries"));
    }
    Ok((mixture, warnings))
}
