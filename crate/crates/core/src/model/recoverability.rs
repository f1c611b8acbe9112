use serde::Serialize;

use crate::linalg::singular_values;
use crate::model::{component_structure, ground_truth_factors, Mixture};
use crate::Scalar;

/// Which of the three reconstruction hypotheses a mixture satisfies.
#[derive(Clone, Debug, Serialize)]
pub struct RecoverabilityReport {
    pub companion_connected: bool,
    /// Dimension of the co-kernel of the true shuffle matrix.
    pub cokernel_dim: usize,
    /// Number of connected components.
    pub r: usize,
    pub cokernel_dim_equals_r: bool,
    pub ratios_distinct: bool,
    pub notes: Vec<String>,
}

impl RecoverabilityReport {
    pub fn all(&self) -> bool {
        self.companion_connected && self.cokernel_dim_equals_r && self.ratios_distinct
    }
}

/// Checks companion-connectivity, that the co-kernel dimension equals `r`
/// (singular values at most `tol · σ_max` count as zero) and that for every
/// pair of states the `L` ratios `s^ℓ_i / s^ℓ_j` are mutually distinct up to
/// a relative `tol`.
pub fn verify_recoverability<T: Scalar>(mixture: &Mixture<T>, tol: f64) -> RecoverabilityReport {
    let n = mixture.n();
    let l = mixture.l();
    let structure = component_structure(mixture);
    let mut notes = Vec::new();

    let companion_connected = structure.companion_connected();
    if !companion_connected {
        let lonely: Vec<String> = (0..n)
            .filter(|&j| structure.companion_of(j).is_none())
            .map(|j| (j + 1).to_string())
            .collect();
        notes.push(format!("states without companion: {}", lonely.join(" ")));
    }

    let a = ground_truth_factors(mixture).shuffle_matrix();
    let sv = singular_values(&a);
    let smax = sv.iter().fold(0.0_f64, |m, x| m.max(x.to_f()));
    let rows = a.nrows();
    let zero = sv.iter().filter(|x| x.to_f() <= tol * smax).count();
    let cokernel_dim = zero + rows.saturating_sub(sv.len());
    let r = structure.r();
    if cokernel_dim != r {
        notes.push(format!("co-kernel dimension {cokernel_dim}, components {r}"));
    }

    let mut ratios_distinct = true;
    let has_zero = (0..l).any(|c| (0..n).any(|i| mixture.s(c, i) <= T::zero()));
    if has_zero {
        ratios_distinct = false;
        notes.push("zero start".into());
    } else {
        'pairs: for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let ratios: Vec<f64> = (0..l).map(|c| (mixture.s(c, i) / mixture.s(c, j)).to_f()).collect();
                for a in 0..l {
                    for b in a + 1..l {
                        let scale = ratios[a].abs().max(ratios[b].abs());
                        if (ratios[a] - ratios[b]).abs() <= tol * scale {
                            ratios_distinct = false;
                            notes.push(format!("equal start ratios for states {} and {}", i + 1, j + 1));
                            break 'pairs;
                        }
                    }
                }
            }
        }
    }

    RecoverabilityReport {
        companion_connected,
        cokernel_dim,
        r,
        cokernel_dim_equals_r: cokernel_dim == r,
        ratios_distinct,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_fixtures::appendix;
    use nalgebra::DMatrix;

    #[test]
    fn appendix_fails_only_ratio_condition() {
        let rep = verify_recoverability(&appendix(), 1e-8);
        assert!(rep.companion_connected);
        assert_eq!(rep.cokernel_dim, 3);
        assert!(rep.cokernel_dim_equals_r);
        assert!(!rep.ratios_distinct);
    }

    #[test]
    fn single_chain_with_two_components() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[0.5, 0.5, 0., 0., 0.3, 0.7, 0., 0., 0., 0., 0.1, 0.9, 0., 0., 0.6, 0.4],
        );
        let mix = Mixture::new(DMatrix::from_row_slice(1, 4, &[0.1, 0.2, 0.3, 0.4]), vec![m]).unwrap();
        let rep = verify_recoverability(&mix, 1e-8);
        assert!(rep.companion_connected);
        assert_eq!(rep.r, 2);
        assert!(rep.cokernel_dim_equals_r);
        assert!(rep.ratios_distinct);
    }

    #[test]
    fn zero_start_is_flagged() {
        let m = DMatrix::from_element(2, 2, 0.5);
        let mix = Mixture::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), vec![m]).unwrap();
        let rep = verify_recoverability(&mix, 1e-8);
        assert!(!rep.ratios_distinct);
        assert!(rep.notes.iter().any(|s| s == "zero start"));
    }
}
