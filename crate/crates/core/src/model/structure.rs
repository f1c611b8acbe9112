use nalgebra::{DMatrix, DVector};

use crate::model::Mixture;
use crate::Scalar;

/// Edge threshold for mixtures known exactly.
pub const EXACT_EDGE_THRESHOLD: f64 = 1e-12;
/// Edge threshold for mixtures estimated from data.
pub const NOISY_EDGE_THRESHOLD: f64 = 1e-6;

/// A vertex of the doubled vertex set: `j⁺` or `j⁻`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Plus(usize),
    Minus(usize),
}

/// One connected component of the transition graph of a chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub chain: usize,
    /// States `j` with `j⁺` in the component, increasing.
    pub plus: Vec<usize>,
    /// States `j` with `j⁻` in the component, increasing.
    pub minus: Vec<usize>,
}

impl Component {
    /// States whose two copies both lie in the component.
    pub fn states(&self) -> Vec<usize> {
        self.plus
            .iter()
            .copied()
            .filter(|j| self.minus.binary_search(j).is_ok())
            .collect()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        match v {
            Vertex::Plus(j) => self.plus.binary_search(&j).is_ok(),
            Vertex::Minus(j) => self.minus.binary_search(&j).is_ok(),
        }
    }
}

/// Connectivity of the bipartite graphs `G^ℓ`.
///
/// `G^ℓ` has the vertices `j⁺, j⁻` for every state and an edge `{i⁻, j⁺}`
/// whenever `M^ℓ_{ij}` exceeds the edge threshold. Components are numbered
/// chain by chain, and within a chain in order of their first vertex in the
/// sequence `0⁺, 1⁺, …, 0⁻, 1⁻, …`.
#[derive(Clone, Debug)]
pub struct ComponentStructure {
    pub n: usize,
    pub l: usize,
    /// Edges `(i, j)` of each `G^ℓ`, standing for `{i⁻, j⁺}`.
    pub graphs: Vec<Vec<(usize, usize)>>,
    pub components: Vec<Component>,
    /// `comp_of[ℓ][v]` with `v = j` for `j⁺` and `v = n + j` for `j⁻`.
    comp_of: Vec<Vec<usize>>,
}

/// Disjoint-set forest with path halving and union by size.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Builds the component structure with the exact-data edge threshold.
pub fn component_structure<T: Scalar>(mixture: &Mixture<T>) -> ComponentStructure {
    component_structure_with(mixture, EXACT_EDGE_THRESHOLD)
}

pub fn component_structure_with<T: Scalar>(mixture: &Mixture<T>, edge_threshold: f64) -> ComponentStructure {
    let n = mixture.n();
    let l = mixture.l();
    let mut graphs = Vec::with_capacity(l);
    let mut components = Vec::new();
    let mut comp_of = Vec::with_capacity(l);
    for c in 0..l {
        let mut uf = UnionFind::new(2 * n);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if mixture.m(c, i, j).to_f() > edge_threshold {
                    edges.push((i, j));
                    uf.union(n + i, j);
                }
            }
        }
        let base = components.len();
        let mut root_id: Vec<Option<usize>> = vec![None; 2 * n];
        let mut ids = vec![0; 2 * n];
        for v in 0..2 * n {
            let root = uf.find(v);
            let id = match root_id[root] {
                Some(id) => id,
                None => {
                    let id = components.len();
                    root_id[root] = Some(id);
                    components.push(Component {
                        chain: c,
                        plus: Vec::new(),
                        minus: Vec::new(),
                    });
                    id
                }
            };
            ids[v] = id;
            if v < n {
                components[id].plus.push(v);
            } else {
                components[id].minus.push(v - n);
            }
        }
        debug_assert!(ids.iter().all(|&id| id >= base));
        graphs.push(edges);
        comp_of.push(ids);
    }
    ComponentStructure {
        n,
        l,
        graphs,
        components,
        comp_of,
    }
}

impl ComponentStructure {
    /// Total number of components `r`.
    pub fn r(&self) -> usize {
        self.components.len()
    }

    /// Index of the component of chain `chain` containing `v`.
    pub fn component_of(&self, chain: usize, v: Vertex) -> usize {
        match v {
            Vertex::Plus(j) => self.comp_of[chain][j],
            Vertex::Minus(j) => self.comp_of[chain][self.n + j],
        }
    }

    /// Indicator vector `ξ_q` of length `2Ln`, laid out like the rows of the
    /// shuffle matrix: `(j, ℓ, +)` at `j·L + ℓ`, `(j, ℓ, −)` at `Ln + j·L + ℓ`.
    pub fn xi(&self, q: usize) -> DVector<f64> {
        let (n, l) = (self.n, self.l);
        let comp = &self.components[q];
        let mut v = DVector::zeros(2 * l * n);
        for &j in &comp.plus {
            v[j * l + comp.chain] = 1.0;
        }
        for &j in &comp.minus {
            v[l * n + j * l + comp.chain] = 1.0;
        }
        v
    }

    /// All indicator vectors as the rows of an `r × 2Ln` matrix.
    pub fn xi_matrix(&self) -> DMatrix<f64> {
        let rows: Vec<_> = (0..self.r()).map(|q| self.xi(q).transpose()).collect();
        DMatrix::from_rows(&rows)
    }

    /// `Ξ_j` (`r × L`): entry `(q, ℓ)` is one when component `q` belongs to
    /// chain `ℓ` and contains both `j⁺` and `j⁻`.
    pub fn big_xi(&self, j: usize) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.r(), self.l);
        for c in 0..self.l {
            let a = self.comp_of[c][j];
            if a == self.comp_of[c][self.n + j] {
                x[(a, c)] = 1.0;
            }
        }
        x
    }

    /// Whether `j⁺` and `j⁻` share a component in every chain.
    pub fn state_connected(&self, j: usize) -> bool {
        (0..self.l).all(|c| self.comp_of[c][j] == self.comp_of[c][self.n + j])
    }

    /// The smallest state `i ≠ j` such that `j⁻` and `i⁻` are reachable
    /// from `j⁺` in every chain.
    pub fn companion_of(&self, j: usize) -> Option<usize> {
        if !self.state_connected(j) {
            return None;
        }
        (0..self.n).find(|&i| i != j && (0..self.l).all(|c| self.comp_of[c][self.n + i] == self.comp_of[c][j]))
    }

    pub fn companion_connected(&self) -> bool {
        (0..self.n).all(|j| self.companion_of(j).is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_fixtures::appendix;

    #[test]
    fn appendix_components() {
        let s = component_structure(&appendix());
        assert_eq!(s.r(), 3);
        assert_eq!(s.components[0].chain, 0);
        assert_eq!(s.components[0].states(), vec![0, 1]);
        assert_eq!(s.components[1].states(), vec![2, 3]);
        assert_eq!(s.components[2].chain, 1);
        assert_eq!(s.components[2].states(), vec![0, 1, 2, 3]);
        assert!(s.companion_connected());
        let x1 = s.big_xi(0);
        assert_eq!(x1, DMatrix::from_row_slice(3, 2, &[1., 0., 0., 0., 0., 1.]));
        assert_eq!(s.big_xi(0), s.big_xi(1));
        assert_ne!(s.big_xi(0), s.big_xi(2));
    }

    #[test]
    fn dense_chain_is_one_component() {
        let m = Mixture::new(
            DMatrix::from_row_slice(1, 3, &[0.2, 0.3, 0.5]),
            vec![DMatrix::from_element(3, 3, 1.0 / 3.0)],
        )
        .unwrap();
        let s = component_structure(&m);
        assert_eq!(s.r(), 1);
        for j in 0..3 {
            assert_eq!(s.big_xi(j), DMatrix::from_element(1, 1, 1.0));
        }
    }

    #[test]
    fn even_cycle_walk_splits_copies() {
        // random walk on a 4-cycle
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            m[(i, (i + 1) % 4)] = 0.5;
            m[(i, (i + 3) % 4)] = 0.5;
        }
        let mix = Mixture::new(DMatrix::from_element(1, 4, 0.25), vec![m]).unwrap();
        let s = component_structure(&mix);
        assert_eq!(s.r(), 2);
        assert!(!s.state_connected(0));
        assert!(!s.companion_connected());
    }

    #[test]
    fn duality_of_indicators() {
        let s = component_structure(&appendix());
        let (n, l) = (4, 2);
        for q in 0..s.r() {
            let xi = s.xi(q);
            for j in 0..n {
                let big = s.big_xi(j);
                for c in 0..l {
                    assert_eq!(xi[j * l + c], big[(q, c)]);
                    assert_eq!(xi[l * n + j * l + c], big[(q, c)]);
                }
            }
        }
    }
}
