//! Ground-truth mixtures, their 3-trail distributions and structure.

mod factors;
mod mixture;
mod recoverability;
mod structure;
mod trails;

pub use factors::{ground_truth_factors, GroundTruthFactors};
pub use mixture::{Mixture, MixtureFile};
pub use recoverability::{verify_recoverability, RecoverabilityReport};
pub(crate) use structure::UnionFind;
pub use structure::{
    component_structure, component_structure_with, Component, ComponentStructure, Vertex, EXACT_EDGE_THRESHOLD,
    NOISY_EDGE_THRESHOLD,
};
pub use trails::{
    exact_trail_distribution, sample_distribution, sample_trails, slice_o, Representation, TrailDistribution,
    TrailMultiset, DENSE_LIMIT,
};

/// The two-chain, four-state example with uniform starts used throughout the
/// tests.
pub fn appendix_mixture() -> Mixture<f64> {
    let start = nalgebra::DMatrix::from_element(2, 4, 0.125);
    let m1 = nalgebra::DMatrix::from_row_slice(
        4,
        4,
        &[0.5, 0.5, 0., 0., 1., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0.5, 0.5],
    );
    let t = 1.0 / 3.0;
    let m2 = nalgebra::DMatrix::from_row_slice(4, 4, &[0., 0., 1., 0., 0., 0.5, 0., 0.5, t, t, t, 0., 0., 1., 0., 0.]);
    Mixture::new(start, vec![m1, m2]).expect("valid example")
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    pub(crate) fn appendix() -> super::Mixture<f64> {
        super::appendix_mixture()
    }
}
