use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::stochastic_tol;
use crate::Scalar;

/// A mixture of `L` Markov chains on `n` states.
///
/// `start` is `L × n` with `start[(ℓ, i)]` the probability of starting in state
/// `i` of chain `ℓ`; the whole matrix sums to one. Each chain is a row-stochastic
/// `n × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture<T: Scalar> {
    start: DMatrix<T>,
    chains: Vec<DMatrix<T>>,
}

impl<T: Scalar> Mixture<T> {
    /// Validates and builds a mixture.
    pub fn new(start: DMatrix<T>, chains: Vec<DMatrix<T>>) -> Result<Self> {
        let m = Self::new_unchecked(start, chains)?;
        m.validate()?;
        Ok(m)
    }

    /// Builds a mixture checking only the shapes. Used for intermediate
    /// estimates and for exercising error paths.
    pub fn new_unchecked(start: DMatrix<T>, chains: Vec<DMatrix<T>>) -> Result<Self> {
        let l = chains.len();
        if l == 0 {
            return Err(Error::InvalidMixture("no chains".into()));
        }
        let n = chains[0].nrows();
        if n == 0 {
            return Err(Error::InvalidMixture("no states".into()));
        }
        if start.nrows() != l || start.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "start is {}x{}, expected {l}x{n}",
                start.nrows(),
                start.ncols()
            )));
        }
        for (c, m) in chains.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "chain {} is {}x{}, expected {n}x{n}",
                    c + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { start, chains })
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let tol = stochastic_tol::<T>(n * self.l());
        let mut total = T::zero();
        for &s in self.start.iter() {
            if !(s >= T::zero()) || !s.is_finite() {
                return Err(Error::InvalidMixture(format!("negative or non-finite start {s}")));
            }
            total += s;
        }
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidMixture(format!("start sums to {total}")));
        }
        let row_tol = stochastic_tol::<T>(n);
        for (c, m) in self.chains.iter().enumerate() {
            for i in 0..n {
                let mut sum = T::zero();
                for j in 0..n {
                    let x = m[(i, j)];
                    if !(x >= T::zero()) || !x.is_finite() {
                        return Err(Error::InvalidMixture(format!(
                            "chain {} has entry {x} at ({}, {})",
                            c + 1,
                            i + 1,
                            j + 1
                        )));
                    }
                    sum += x;
                }
                if (sum - T::one()).abs() > row_tol {
                    return Err(Error::NonStochasticRow { chain: c, state: i });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.start.ncols()
    }

    /// Number of chains.
    pub fn l(&self) -> usize {
        self.chains.len()
    }

    pub fn start(&self) -> &DMatrix<T> {
        &self.start
    }

    pub fn chains(&self) -> &[DMatrix<T>] {
        &self.chains
    }

    pub fn chain(&self, l: usize) -> &DMatrix<T> {
        &self.chains[l]
    }

    /// `s^ℓ_i`.
    #[inline]
    pub fn s(&self, l: usize, i: usize) -> T {
        self.start[(l, i)]
    }

    /// `M^ℓ_{ij}`.
    #[inline]
    pub fn m(&self, l: usize, i: usize, j: usize) -> T {
        self.chains[l][(i, j)]
    }

    /// Returns the mixture with chains reordered so that chain `ℓ` of the
    /// result is chain `perm[ℓ]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.l() {
            return Err(Error::ShapeMismatch("permutation length".into()));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            seen[p] = true;
        }
        let start = DMatrix::from_fn(self.l(), self.n(), |l, i| self.start[(perm[l], i)]);
        let chains = perm.iter().map(|&p| self.chains[p].clone()).collect();
        Ok(Self { start, chains })
    }

    /// Clips negative entries to zero and renormalises rows and the start
    /// matrix. Rows with no positive mass become uniform. Returns the mixture
    /// and the number of entries that were clipped.
    pub fn sanitized(start: DMatrix<T>, chains: Vec<DMatrix<T>>) -> Result<(Self, usize)> {
        let mut clipped = 0usize;
        let mut start = start;
        for x in start.iter_mut() {
            if !(*x >= T::zero()) {
                *x = T::zero();
                clipped += 1;
            }
        }
        let total = start.sum();
        if total > T::zero() {
            start /= total;
        } else {
            let len = T::of(start.len() as f64);
            start.fill(T::one() / len);
        }
        let mut chains = chains;
        for m in chains.iter_mut() {
            let n = m.ncols();
            for i in 0..m.nrows() {
                let mut sum = T::zero();
                for j in 0..n {
                    let x = &mut m[(i, j)];
                    if !(*x >= T::zero()) {
                        *x = T::zero();
                        clipped += 1;
                    }
                    sum += *x;
                }
                for j in 0..n {
                    m[(i, j)] = if sum > T::zero() {
                        m[(i, j)] / sum
                    } else {
                        T::one() / T::of(n as f64)
                    };
                }
            }
        }
        Ok((Self::new_unchecked(start, chains)?, clipped))
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> Mixture<U> {
        Mixture {
            start: self.start.map(|x| U::of(x.to_f())),
            chains: self.chains.iter().map(|m| m.map(|x| U::of(x.to_f()))).collect(),
        }
    }

    pub fn to_file(&self) -> MixtureFile<T> {
        MixtureFile {
            n: self.n(),
            l: self.l(),
            start: (0..self.l())
                .map(|l| self.start.row(l).iter().copied().collect())
                .collect(),
            chains: self
                .chains
                .iter()
                .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
                .collect(),
        }
    }

    pub fn from_file(f: MixtureFile<T>) -> Result<Self> {
        if f.start.len() != f.l || f.chains.len() != f.l {
            return Err(Error::ShapeMismatch(format!(
                "L = {} but {} start rows and {} chains",
                f.l,
                f.start.len(),
                f.chains.len()
            )));
        }
        let rect = |rows: &[Vec<T>], cols: usize, what: &str| -> Result<()> {
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::ShapeMismatch(format!("{what} rows must have length {cols}")));
            }
            Ok(())
        };
        rect(&f.start, f.n, "start")?;
        let start = DMatrix::from_fn(f.l, f.n, |l, i| f.start[l][i]);
        let mut chains = Vec::with_capacity(f.l);
        for c in &f.chains {
            if c.len() != f.n {
                return Err(Error::ShapeMismatch(format!("chains must have {} rows", f.n)));
            }
            rect(c, f.n, "chain")?;
            chains.push(DMatrix::from_fn(f.n, f.n, |i, j| c[i][j]));
        }
        Self::new(start, chains)
    }
}

/// On-disk JSON layout of a mixture: `{n, L, start, chains}` with row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MixtureFile<T> {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub start: Vec<Vec<T>>,
    pub chains: Vec<Vec<Vec<T>>>,
}
