//! Expectation maximisation over weighted 3-trails.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Mixture, TrailDistribution};
use crate::Scalar;

/// Where EM starts.
#[derive(Clone, Debug)]
pub enum EmInit<T: Scalar> {
    /// Normalised uniform rows and start vector drawn with the seed.
    Random(u64),
    Warm(Mixture<T>),
}

#[derive(Clone, Debug)]
pub struct EmConfig<T: Scalar> {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tol: f64,
    pub init: EmInit<T>,
    /// Added to every transition count.
    pub smoothing: f64,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-8,
            init: EmInit::Random(0),
            smoothing: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit<T: Scalar> {
    pub mixture: Mixture<T>,
    /// Number of M-steps taken.
    pub iterations: usize,
    /// Log-likelihood of the start point and of every iterate.
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> EmFit<T> {
    /// CSV with header `iter,loglik`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,loglik\n");
        for (i, ll) in self.loglik_trace.iter().enumerate() {
            out.push_str(&format!("{i},{ll:.16e}\n"));
        }
        out
    }
}

pub fn random_mixture<T: Scalar>(n: usize, l: usize, seed: u64) -> Mixture<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        let mut m = DMatrix::from_fn(rows, cols, |_, _| T::of(rng.random::<f64>() + f64::MIN_POSITIVE));
        m.row_iter_mut().for_each(|mut r| {
            let s = r.sum();
            r /= s;
        });
        m
    };
    let chains = (0..l).map(|_| draw(n, n)).collect();
    let flat = draw(1, l * n);
    let start = DMatrix::from_fn(l, n, |c, i| flat[(0, c * n + i)]);
    Mixture::new_unchecked(start, chains).expect("shapes agree")
}

struct Stats {
    start: Vec<f64>,
    counts: Vec<f64>,
    loglik: f64,
    skipped: usize,
}

impl Stats {
    fn zero(n: usize, l: usize) -> Self {
        Self {
            start: vec![0.0; l * n],
            counts: vec![0.0; l * n * n],
            loglik: 0.0,
            skipped: 0,
        }
    }

    fn add(mut self, o: Stats) -> Self {
        self.start.iter_mut().zip(&o.start).for_each(|(a, b)| *a += b);
        self.counts.iter_mut().zip(&o.counts).for_each(|(a, b)| *a += b);
        self.loglik += o.loglik;
        self.skipped += o.skipped;
        self
    }
}

const CHUNK: usize = 4096;

fn e_step<T: Scalar>(entries: &[(usize, usize, usize, f64)], m: &Mixture<T>) -> Stats {
    let n = m.n();
    let l = m.l();
    let start: Vec<f64> = (0..l * n).map(|x| m.s(x / n, x % n).to_f()).collect();
    let trans: Vec<f64> = (0..l * n * n)
        .map(|x| m.m(x / (n * n), (x / n) % n, x % n).to_f())
        .collect();
    let parts: Vec<Stats> = entries
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut st = Stats::zero(n, l);
            let mut g = vec![0.0; l];
            for &(i, j, k, w) in chunk {
                let mut p = 0.0;
                for c in 0..l {
                    g[c] = start[c * n + i] * trans[(c * n + i) * n + j] * trans[(c * n + j) * n + k];
                    p += g[c];
                }
                if !(p > 0.0) {
                    st.skipped += 1;
                    continue;
                }
                st.loglik += w * p.ln();
                for c in 0..l {
                    let wg = w * g[c] / p;
                    st.start[c * n + i] += wg;
                    st.counts[(c * n + i) * n + j] += wg;
                    st.counts[(c * n + j) * n + k] += wg;
                }
            }
            st
        })
        .collect();
    parts.into_iter().fold(Stats::zero(n, l), Stats::add)
}

fn m_step<T: Scalar>(st: &Stats, n: usize, l: usize, alpha: f64) -> Result<Mixture<T>> {
    let total: f64 = st.start.iter().sum();
    let start = DMatrix::from_fn(l, n, |c, i| {
        T::of(if total > 0.0 {
            st.start[c * n + i] / total
        } else {
            1.0 / (l * n) as f64
        })
    });
    let chains = (0..l)
        .map(|c| {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                let row = &st.counts[(c * n + i) * n..(c * n + i + 1) * n];
                let sum: f64 = row.iter().sum::<f64>() + alpha * n as f64;
                for j in 0..n {
                    m[(i, j)] = T::of(if sum > 0.0 {
                        (row[j] + alpha) / sum
                    } else {
                        1.0 / n as f64
                    });
                }
            }
            m
        })
        .collect();
    Mixture::new_unchecked(start, chains)
}

/// Fits `l` chains by EM, starting from `cfg.init`.
pub fn em_fit<T: Scalar>(dist: &TrailDistribution<T>, l: usize, cfg: &EmConfig<T>) -> Result<EmFit<T>> {
    let n = dist.n();
    if l == 0 {
        return Err(Error::InvalidArgument("L must be positive".into()));
    }
    if cfg.tol < 0.0 || cfg.smoothing < 0.0 {
        return Err(Error::InvalidArgument(
            "tolerance and smoothing must be non-negative".into(),
        ));
    }
    let mut current = match &cfg.init {
        EmInit::Random(seed) => random_mixture(n, l, *seed),
        EmInit::Warm(m) => {
            if m.n() != n || m.l() != l {
                return Err(Error::ShapeMismatch(format!(
                    "warm start has n = {}, L = {}; expected n = {n}, L = {l}",
                    m.n(),
                    m.l()
                )));
            }
            m.clone()
        }
    };
    let entries: Vec<(usize, usize, usize, f64)> = dist
        .entries()
        .into_iter()
        .map(|(i, j, k, p)| (i, j, k, p.to_f()))
        .collect();
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    loop {
        let st = e_step(&entries, &current);
        if st.skipped > 0 && trace.is_empty() {
            warnings.push(format!(
                "{} trails have zero model probability and were skipped",
                st.skipped
            ));
        }
        trace.push(st.loglik);
        if iterations > 0 {
            let prev = trace[trace.len() - 2];
            let gain = (st.loglik - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if gain < cfg.tol {
                break;
            }
        }
        if iterations >= cfg.max_iters {
            break;
        }
        current = m_step(&st, n, l, cfg.smoothing)?;
        iterations += 1;
    }
    Ok(EmFit {
        mixture: current,
        iterations,
        loglik_trace: trace,
        warnings,
    })
}

/// A few EM iterations from `seed_mixture` with no early stop.
pub fn refine<T: Scalar>(dist: &TrailDistribution<T>, seed_mixture: &Mixture<T>, iters: usize) -> Result<EmFit<T>> {
    em_fit(
        dist,
        seed_mixture.l(),
        &EmConfig {
            max_iters: iters,
            tol: 0.0,
            init: EmInit::Warm(seed_mixture.clone()),
            smoothing: 0.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};

    #[test]
    fn likelihood_never_decreases() {
        let d = exact_trail_distribution(&appendix_mixture());
        let fit = em_fit(
            &d,
            2,
            &EmConfig {
                max_iters: 50,
                tol: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        assert_eq!(fit.loglik_trace.len(), fit.iterations + 1);
    }

    #[test]
    fn zero_iterations_returns_seed() {
        let m = appendix_mixture();
        let d = exact_trail_distribution(&m);
        let fit = refine(&d, &m, 0).unwrap();
        assert_eq!(fit.mixture, m);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let m = appendix_mixture();
        let d = exact_trail_distribution(&m);
        let fit = refine(&d, &m, 5).unwrap();
        for c in 0..2 {
            assert!((fit.mixture.chain(c) - m.chain(c)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn single_chain_one_step_is_the_count_estimate() {
        let mut t = crate::model::TrailMultiset::new(3);
        t.add(vec![0, 1, 2], 3);
        t.add(vec![1, 1, 0], 1);
        t.add(vec![2, 0, 1], 2);
        let d = t.to_distribution::<f64>().unwrap();
        let fit = em_fit(
            &d,
            1,
            &EmConfig {
                max_iters: 1,
                tol: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        // transitions: 0->1 x3, 1->2 x3, 1->1 x1, 1->0 x1, 2->0 x2, 0->1 x2
        let m = fit.mixture.chain(0);
        assert!((m[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((m[(1, 2)] - 0.6).abs() < 1e-15);
        assert!((m[(1, 1)] - 0.2).abs() < 1e-15);
        assert!((m[(2, 0)] - 1.0).abs() < 1e-15);
        assert!((fit.mixture.s(0, 0) - 0.5).abs() < 1e-15);
    }
}
