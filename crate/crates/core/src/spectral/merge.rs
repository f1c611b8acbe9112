use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::pinv;
use crate::model::UnionFind;
use crate::spectral::{CokernelFactorization, Mode, Tolerances};
use crate::Scalar;

/// Result of merging the per-representative column sets.
#[derive(Clone, Debug)]
pub struct Assembly<T: Scalar> {
    /// `ΠR`, the inverse of the matrix with the merged columns `ρ_1 … ρ_r`.
    pub pi_r: DMatrix<T>,
    /// The merged columns as an `r × r` matrix.
    pub columns: DMatrix<T>,
    /// `support[c][t]`: component index of column `t` of representative `c`.
    pub support: Vec<Vec<usize>>,
}

struct Col<T: Scalar> {
    owner: usize,
    v: DVector<T>,
    /// Unit vector with its largest-magnitude entry positive.
    dir: DVector<f64>,
}

fn direction<T: Scalar>(v: &DVector<T>) -> DVector<f64> {
    let f = v.map(|x| x.to_f());
    let norm = f.norm();
    if norm == 0.0 {
        return f;
    }
    let big = f
        .iter()
        .copied()
        .fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
    let s = if big < 0.0 { -1.0 } else { 1.0 };
    f * (s / norm)
}

fn angular(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (1.0 - a.dot(b).abs()).max(0.0)
}

/// Merges the columns of every `R̃_c†` into `r` distinct component columns.
///
/// Exact mode identifies columns whose angular distance `1 − |cos|` is at
/// most `tol.dup`; any count other than `r` is an error. Noisy mode merges the
/// closest clusters (average linkage) until `r` remain, never joining two
/// columns of the same representative, and averages each cluster.
pub fn assemble_r<T: Scalar>(
    tilde_rs: &[DMatrix<T>],
    r: usize,
    mode: Mode,
    tol: &Tolerances,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Assembly<T>> {
    let mut cols: Vec<Col<T>> = Vec::new();
    let mut offsets = Vec::with_capacity(tilde_rs.len());
    for (c, rt) in tilde_rs.iter().enumerate() {
        offsets.push(cols.len());
        let inv = pinv(rt, Some(rt.nrows()), T::of(tol.rank));
        for t in 0..inv.ncols() {
            let v = inv.column(t).into_owned();
            let dir = direction(&v);
            cols.push(Col { owner: c, v, dir });
        }
    }
    let m = cols.len();
    if m < r {
        return Err(Error::ComponentsNotCovered {
            distinct: m,
            expected: r,
        });
    }
    let clusters: Vec<Vec<usize>> = match mode {
        Mode::Exact => {
            let mut uf = UnionFind::new(m);
            for a in 0..m {
                for b in a + 1..m {
                    if cols[a].owner != cols[b].owner && angular(&cols[a].dir, &cols[b].dir) <= tol.dup {
                        uf.union(a, b);
                    }
                }
            }
            group(&mut uf, m)
        }
        Mode::Noisy => agglomerate(&cols, r),
    };
    for cl in &clusters {
        let mut owners: Vec<usize> = cl.iter().map(|&a| cols[a].owner).collect();
        owners.sort_unstable();
        if owners.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::ComponentsNotCovered {
                distinct: clusters.len(),
                expected: r,
            });
        }
    }
    if clusters.len() != r {
        return Err(Error::ComponentsNotCovered {
            distinct: clusters.len(),
            expected: r,
        });
    }
    let mut columns = DMatrix::zeros(r, r);
    let mut of_col = vec![0; m];
    for (q, cl) in clusters.iter().enumerate() {
        let first = &cols[cl[0]];
        let col = match mode {
            Mode::Exact => first.v.clone(),
            Mode::Noisy => {
                let f0 = first.v.map(|x| x.to_f());
                let mut acc = DVector::zeros(r);
                for &a in cl {
                    let v = &cols[a].v;
                    if v.map(|x| x.to_f()).dot(&f0) < 0.0 {
                        acc -= v;
                    } else {
                        acc += v;
                    }
                }
                acc / T::of(cl.len() as f64)
            }
        };
        columns.set_column(q, &col);
        for &a in cl {
            of_col[a] = q;
        }
    }
    let support = tilde_rs
        .iter()
        .enumerate()
        .map(|(c, rt)| (0..rt.nrows()).map(|t| of_col[offsets[c] + t]).collect())
        .collect();
    let pi_r = match columns.clone().try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => inv,
        _ => {
            if strict {
                return Err(Error::SingularBasis);
            }
            warnings.push("merged columns are singular; using the pseudoinverse".into());
            pinv(&columns, None, T::of(tol.rank))
        }
    };
    Ok(Assembly { pi_r, columns, support })
}

fn group(uf: &mut UnionFind, m: usize) -> Vec<Vec<usize>> {
    let mut id = vec![usize::MAX; m];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for a in 0..m {
        let root = uf.find(a);
        if id[root] == usize::MAX {
            id[root] = out.len();
            out.push(Vec::new());
        }
        out[id[root]].push(a);
    }
    out
}

fn agglomerate<T: Scalar>(cols: &[Col<T>], r: usize) -> Vec<Vec<usize>> {
    let m = cols.len();
    let mut d = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a + 1..m {
            let x = angular(&cols[a].dir, &cols[b].dir);
            d[(a, b)] = x;
            d[(b, a)] = x;
        }
    }
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|a| vec![a]).collect();
    let mut owners: Vec<Vec<usize>> = cols.iter().map(|c| vec![c.owner]).collect();
    while clusters.len() > r {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                if owners[x].iter().any(|o| owners[y].contains(o)) {
                    continue;
                }
                let mut sum = 0.0;
                for &a in &clusters[x] {
                    for &b in &clusters[y] {
                        sum += d[(a, b)];
                    }
                }
                let avg = sum / (clusters[x].len() * clusters[y].len()) as f64;
                if best.is_none_or(|(b, _, _)| avg < b) {
                    best = Some((avg, x, y));
                }
            }
        }
        let Some((_, x, y)) = best else { break };
        let moved = clusters.remove(y);
        let moved_owners = owners.remove(y);
        clusters[x].extend(moved);
        clusters[x].sort_unstable();
        owners[x].extend(moved_owners);
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Indices of the rows of `ΠR Y′_j` whose norm exceeds `tol.row` times the
/// largest row norm.
pub fn nonzero_rows<T: Scalar>(pi_r: &DMatrix<T>, yp: &DMatrix<T>, tol: &Tolerances) -> Vec<usize> {
    let rows = pi_r * yp;
    let norms: Vec<f64> = (0..rows.nrows()).map(|q| rows.row(q).norm().to_f()).collect();
    let max = norms.iter().copied().fold(0.0_f64, f64::max);
    (0..norms.len()).filter(|&q| norms[q] > tol.row * max).collect()
}

/// Checks that `ΠR Y′_j` is supported exactly on the components of each
/// representative.
pub(crate) fn check_row_support<T: Scalar>(
    asm: &Assembly<T>,
    fact: &CokernelFactorization<T>,
    reps: &[usize],
    tol: &Tolerances,
) -> Result<()> {
    for (c, &j) in reps.iter().enumerate() {
        let found = nonzero_rows(&asm.pi_r, &fact.yp[j], tol);
        let mut expected = asm.support[c].clone();
        expected.sort_unstable();
        if found != expected {
            return Err(Error::RowSupportMismatch {
                state: j,
                found: found.len(),
                expected: expected.len(),
            });
        }
    }
    Ok(())
}
