//! Random mixtures with a prescribed number of connected components.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{verify_recoverability, Mixture};
use crate::Scalar;

pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Relative tolerance handed to the recoverability check.
pub const RECOVERABILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    pub seed: u64,
    #[serde(default)]
    pub ensure_recoverable: bool,
    #[serde(default = "default_min_size")]
    pub min_component_size: usize,
}

fn default_min_size() -> usize {
    2
}

impl GeneratorSpec {
    pub fn new(n: usize, l: usize, r: usize, seed: u64) -> Self {
        Self {
            n,
            l,
            r,
            seed,
            ensure_recoverable: false,
            min_component_size: 2,
        }
    }

    pub fn recoverable(mut self) -> Self {
        self.ensure_recoverable = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.l == 0 {
            return bad("L must be positive".into());
        }
        if self.r < self.l {
            return bad(format!("r = {} is smaller than L = {}", self.r, self.l));
        }
        if self.n < 2 * self.l {
            return bad(format!("n = {} is smaller than 2L = {}", self.n, 2 * self.l));
        }
        if self.min_component_size < 2 && self.r > self.l {
            return bad("min_component_size must be at least 2".into());
        }
        // the worst case puts every split on one chain
        let parts = self.r - self.l + 1;
        if self.r > self.l && parts * self.min_component_size > self.n {
            return bad(format!(
                "{parts} parts of at least {} states do not fit in n = {}",
                self.min_component_size, self.n
            ));
        }
        Ok(())
    }
}

/// Uniforms on (0, 1], normalised per row.
fn stochastic_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| 1.0 - rng.random::<f64>());
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Assigns states to `parts` parts until every part has `min` states.
fn partition(rng: &mut impl Rng, n: usize, parts: usize, min: usize) -> Vec<usize> {
    loop {
        let part: Vec<usize> = (0..n).map(|_| rng.random_range(0..parts)).collect();
        let mut size = vec![0; parts];
        part.iter().for_each(|&p| size[p] += 1);
        if size.iter().all(|&s| s >= min) {
            return part;
        }
    }
}

fn draw_mixture(spec: &GeneratorSpec, rng: &mut impl Rng) -> Mixture<f64> {
    let (n, l) = (spec.n, spec.l);
    let mut chains: Vec<DMatrix<f64>> = (0..l).map(|_| stochastic_rows(rng, n, n)).collect();
    let flat = stochastic_rows(rng, 1, l * n);
    let start = DMatrix::from_fn(l, n, |c, i| flat[(0, c * n + i)]);
    let mut splits = vec![0usize; l];
    for _ in 0..spec.r - l {
        splits[rng.random_range(0..l)] += 1;
    }
    for (m, &k) in chains.iter_mut().zip(&splits) {
        if k == 0 {
            continue;
        }
        let part = partition(rng, n, k + 1, spec.min_component_size);
        for i in 0..n {
            for j in 0..n {
                if part[i] != part[j] {
                    m[(i, j)] = 0.0;
                }
            }
            let mut row = m.row_mut(i);
            let s = row.sum();
            row /= s;
        }
    }
    Mixture::new(start, chains).expect("rows are normalised")
}

/// Draws a mixture per the spec. Deterministic in `spec.seed`.
pub fn generate_mixture<T: Scalar>(spec: &GeneratorSpec) -> Result<Mixture<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last = String::new();
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let m = draw_mixture(spec, &mut rng);
        if !spec.ensure_recoverable {
            return Ok(m.cast());
        }
        let rep = verify_recoverability(&m, RECOVERABILITY_TOL);
        if rep.all() {
            return Ok(m.cast());
        }
        last = rep.notes.join("; ");
    }
    Err(Error::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::component_structure;

    #[test]
    fn connected_when_r_equals_l() {
        let m: Mixture<f64> = generate_mixture(&GeneratorSpec::new(20, 3, 3, 1).recoverable()).unwrap();
        let cs = component_structure(&m);
        assert_eq!(cs.r(), 3);
        assert!(m.chains().iter().all(|c| c.iter().all(|&x| x > 0.0)));
    }

    #[test]
    fn exact_component_count() {
        for seed in 0..5 {
            let m: Mixture<f64> = generate_mixture(&GeneratorSpec::new(20, 3, 8, seed)).unwrap();
            assert_eq!(component_structure(&m).r(), 8);
        }
    }

    #[test]
    fn deterministic() {
        let s = GeneratorSpec::new(8, 2, 4, 9);
        let a: Mixture<f64> = generate_mixture(&s).unwrap();
        let b: Mixture<f64> = generate_mixture(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_mixture::<f64>(&GeneratorSpec::new(5, 3, 3, 0)).is_err());
        assert!(generate_mixture::<f64>(&GeneratorSpec::new(6, 3, 2, 0)).is_err());
        let mut s = GeneratorSpec::new(6, 1, 3, 0);
        s.min_component_size = 3;
        assert!(generate_mixture::<f64>(&s).is_err());
    }
}
