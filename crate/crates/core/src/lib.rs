//! Numerical core for random Schrödinger operators with bump-shaped
//! single-site distributions: lattice and tree graphs, coupled disorder
//! ensembles, local spectral measures, density-of-states derivatives,
//! characteristic functions and fractional moments.

pub mod error;
pub mod fourier;
pub mod graph;
pub mod linalg;
pub mod localization;
pub mod operator;
pub mod quad;
pub mod spectral;
pub mod ssd;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{GraphKind, GraphSpec};
pub use operator::{assemble, realize_disorder, DisorderRealization, EnsembleSpec, SparseOperator};
pub use ssd::{BumpSsd, SsdParams};
