//! Learning mixtures of Markov chains from 3-trail distributions.
//!
//! The library covers ground-truth models and their trail distributions,
//! spectral recovery for chains with several connected components,
//! parameter estimation, EM refinement, evaluation metrics and file formats.

pub mod em;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod params;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mixture64 = model::Mixture<f64>;
pub type Mixture32 = model::Mixture<f32>;
pub type TrailDistribution64 = model::TrailDistribution<f64>;
pub type TrailDistribution32 = model::TrailDistribution<f32>;
pub type RecoveryReport64 = spectral::RecoveryReport<f64>;
pub type RecoveryReport32 = spectral::RecoveryReport<f32>;
