use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Mixture;
use crate::Scalar;

/// Largest `n` for which an exact distribution is stored densely.
pub const DENSE_LIMIT: usize = 64;

/// Trails drawn per sampling chunk. Each chunk has its own RNG stream, so
/// results do not depend on the number of worker threads.
const SAMPLE_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Exact,
    Empirical { samples: u64 },
}

#[derive(Clone, Debug)]
enum Storage<T> {
    /// Indexed `(j * n + i) * n + k`, middle state major.
    Dense(Vec<T>),
    /// Keyed `(j, i, k)`.
    Sparse(BTreeMap<(usize, usize, usize), T>),
}

/// A probability mass over 3-trails `(i, j, k) ∈ [n]³`.
#[derive(Clone, Debug)]
pub struct TrailDistribution<T: Scalar> {
    n: usize,
    repr: Representation,
    storage: Storage<T>,
}

impl<T: Scalar> TrailDistribution<T> {
    /// Builds a distribution from `(i, j, k, mass)` entries. Masses for repeated
    /// trails are added. Dense storage is used for exact distributions with
    /// `n ≤ DENSE_LIMIT`.
    pub fn from_entries(
        n: usize,
        repr: Representation,
        entries: impl IntoIterator<Item = (usize, usize, usize, T)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        let dense = matches!(repr, Representation::Exact) && n <= DENSE_LIMIT;
        let mut storage = if dense {
            Storage::Dense(vec![T::zero(); n * n * n])
        } else {
            Storage::Sparse(BTreeMap::new())
        };
        for (i, j, k, p) in entries {
            for idx in [i, j, k] {
                if idx >= n {
                    return Err(Error::StateOutOfRange { index: idx, n });
                }
            }
            if !(p >= T::zero()) {
                return Err(Error::InvalidArgument(format!("negative mass {p}")));
            }
            match &mut storage {
                Storage::Dense(v) => v[(j * n + i) * n + k] += p,
                Storage::Sparse(m) => {
                    if p > T::zero() {
                        *m.entry((j, i, k)).or_insert(T::zero()) += p;
                    }
                }
            }
        }
        Ok(Self { n, repr, storage })
    }

    /// Builds an empirical distribution from trail counts.
    pub fn from_counts(n: usize, counts: &BTreeMap<(usize, usize, usize), u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::NoTrails);
        }
        let inv = 1.0 / total as f64;
        Self::from_entries(
            n,
            Representation::Empirical { samples: total },
            counts.iter().map(|(&(i, j, k), &c)| (i, j, k, T::of(c as f64 * inv))),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.repr, Representation::Exact)
    }

    /// `p(i, j, k)`.
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        let n = self.n;
        if i >= n || j >= n || k >= n {
            return T::zero();
        }
        match &self.storage {
            Storage::Dense(v) => v[(j * n + i) * n + k],
            Storage::Sparse(m) => m.get(&(j, i, k)).copied().unwrap_or_else(T::zero),
        }
    }

    /// Non-zero entries `(i, j, k, p)`, middle state major.
    pub fn entries(&self) -> Vec<(usize, usize, usize, T)> {
        let n = self.n;
        match &self.storage {
            Storage::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != T::zero())
                .map(|(idx, &p)| {
                    let k = idx % n;
                    let i = (idx / n) % n;
                    let j = idx / (n * n);
                    (i, j, k, p)
                })
                .collect(),
            Storage::Sparse(m) => m.iter().map(|(&(j, i, k), &p)| (i, j, k, p)).collect(),
        }
    }

    pub fn total(&self) -> T {
        match &self.storage {
            Storage::Dense(v) => v.iter().fold(T::zero(), |a, &b| a + b),
            Storage::Sparse(m) => m.values().fold(T::zero(), |a, &b| a + b),
        }
    }

    /// `O_j(i, k) = p(i, j, k)` for a 0-based middle state `j`.
    pub fn slice(&self, j: usize) -> Result<DMatrix<T>> {
        let n = self.n;
        if j >= n {
            return Err(Error::StateOutOfRange { index: j, n });
        }
        let mut o = DMatrix::zeros(n, n);
        match &self.storage {
            Storage::Dense(v) => {
                let base = j * n * n;
                for i in 0..n {
                    for k in 0..n {
                        o[(i, k)] = v[base + i * n + k];
                    }
                }
            }
            Storage::Sparse(m) => {
                for (&(_, i, k), &p) in m.range((j, 0, 0)..(j + 1, 0, 0)) {
                    o[(i, k)] = p;
                }
            }
        }
        Ok(o)
    }

    /// All slices `O_1, …, O_n`.
    pub fn slices(&self) -> Vec<DMatrix<T>> {
        (0..self.n).map(|j| self.slice(j).expect("in range")).collect()
    }

    /// `O_j 1_n` for every `j`.
    pub fn row_sums(&self) -> Vec<DVector<T>> {
        self.slices().iter().map(|o| o.column_sum()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> TrailDistribution<U> {
        let storage = match &self.storage {
            Storage::Dense(v) => Storage::Dense(v.iter().map(|&x| U::of(x.to_f())).collect()),
            Storage::Sparse(m) => Storage::Sparse(m.iter().map(|(&k, &x)| (k, U::of(x.to_f()))).collect()),
        };
        TrailDistribution {
            n: self.n,
            repr: self.repr,
            storage,
        }
    }
}

/// Exact 3-trail distribution `p(i, j, k) = Σ_ℓ s^ℓ_i M^ℓ_{ij} M^ℓ_{jk}`.
pub fn exact_trail_distribution<T: Scalar>(mixture: &Mixture<T>) -> TrailDistribution<T> {
    let n = mixture.n();
    let mut entries = Vec::new();
    for l in 0..mixture.l() {
        let m = mixture.chain(l);
        for i in 0..n {
            let s = mixture.s(l, i);
            if s == T::zero() {
                continue;
            }
            for j in 0..n {
                let a = s * m[(i, j)];
                if a == T::zero() {
                    continue;
                }
                for k in 0..n {
                    let b = m[(j, k)];
                    if b != T::zero() {
                        entries.push((i, j, k, a * b));
                    }
                }
            }
        }
    }
    TrailDistribution::from_entries(n, Representation::Exact, entries).expect("indices are in range by construction")
}

/// `O_j(i, k) = p(i, j, k)` for a 0-based middle state `j`.
pub fn slice_o<T: Scalar>(dist: &TrailDistribution<T>, j: usize) -> Result<DMatrix<T>> {
    dist.slice(j)
}

/// A weighted multiset of trails over `n` states (0-based ids).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrailMultiset {
    pub n: usize,
    pub trails: BTreeMap<Vec<usize>, u64>,
}

impl TrailMultiset {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            trails: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, trail: Vec<usize>, count: u64) {
        if count > 0 {
            *self.trails.entry(trail).or_insert(0) += count;
        }
    }

    /// Total weight.
    pub fn total(&self) -> u64 {
        self.trails.values().sum()
    }

    /// Counts of every contiguous length-3 window, weighted by the trail count.
    /// Trails shorter than three states contribute nothing.
    pub fn window_counts(&self) -> BTreeMap<(usize, usize, usize), u64> {
        let mut out = BTreeMap::new();
        for (t, &c) in &self.trails {
            for w in t.windows(3) {
                *out.entry((w[0], w[1], w[2])).or_insert(0) += c;
            }
        }
        out
    }

    /// Empirical 3-trail distribution of the length-3 windows.
    pub fn to_distribution<T: Scalar>(&self) -> Result<TrailDistribution<T>> {
        TrailDistribution::from_counts(self.n, &self.window_counts())
    }
}

struct Sampler {
    n: usize,
    /// Cumulative start probabilities over `(ℓ, i)` flattened chain major.
    start_cdf: Vec<f64>,
    /// Cumulative transition rows, `[ℓ][i]`.
    rows: Vec<Vec<Vec<f64>>>,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w.max(0.0);
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total = *cdf.last()?;
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let idx = cdf.partition_point(|&c| c <= u);
    if idx < cdf.len() {
        Some(idx)
    } else {
        // rounding at the top end: last entry with positive mass
        let mut k = cdf.len() - 1;
        while k > 0 && cdf[k - 1] == cdf[k] {
            k -= 1;
        }
        Some(k)
    }
}

impl Sampler {
    fn new<T: Scalar>(mixture: &Mixture<T>) -> Self {
        let n = mixture.n();
        let l = mixture.l();
        let start_cdf = cdf((0..l * n).map(|x| mixture.s(x / n, x % n).to_f()));
        let rows = (0..l)
            .map(|c| (0..n).map(|i| cdf((0..n).map(|j| mixture.m(c, i, j).to_f()))).collect())
            .collect();
        Self { n, start_cdf, rows }
    }

    fn trail(&self, len: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let first = draw(&self.start_cdf, rng).ok_or_else(|| Error::InvalidMixture("start has no mass".into()))?;
        let chain = first / self.n;
        let mut state = first % self.n;
        let mut out = Vec::with_capacity(len);
        out.push(state);
        for _ in 1..len {
            state = draw(&self.rows[chain][state], rng).ok_or(Error::NonStochasticRow { chain, state })?;
            out.push(state);
        }
        Ok(out)
    }
}

/// Samples `count` trails of `length` states. Deterministic given `seed`,
/// independent of the rayon thread count.
pub fn sample_trails<T: Scalar>(mixture: &Mixture<T>, count: u64, seed: u64, length: usize) -> Result<TrailMultiset> {
    if length == 0 {
        return Err(Error::InvalidArgument("trail length must be at least 1".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let sampler = Sampler::new(mixture);
    let chunks = count.div_ceil(SAMPLE_CHUNK as u64);
    let parts: Vec<Result<BTreeMap<Vec<usize>, u64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let todo = (count - c * SAMPLE_CHUNK as u64).min(SAMPLE_CHUNK as u64);
            let mut local = BTreeMap::new();
            for _ in 0..todo {
                let t = sampler.trail(length, &mut rng)?;
                *local.entry(t).or_insert(0u64) += 1;
            }
            Ok(local)
        })
        .collect();
    let mut out = TrailMultiset::new(mixture.n());
    for part in parts {
        for (t, c) in part? {
            out.add(t, c);
        }
    }
    Ok(out)
}

/// Samples `count` 3-trails and returns their empirical distribution.
pub fn sample_distribution<T: Scalar>(mixture: &Mixture<T>, count: u64, seed: u64) -> Result<TrailDistribution<T>> {
    sample_trails(mixture, count, seed, 3)?.to_distribution()
}
