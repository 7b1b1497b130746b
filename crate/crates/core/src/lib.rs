//! Bipartite regularized out-of-time-ordered correlators at finite
//! temperature, for Hamiltonians small enough to diagonalize exactly.

pub mod algebra;
pub mod brotoc;
pub mod equilibration;
pub mod error;
pub mod experiment;
mod linalg;
pub mod models;
pub mod random;
pub mod spectral;
pub mod thermal;

#[cfg(test)]
mod testutil;

pub use algebra::{Bipartition, DenseOperator, PureState, SchmidtData, SpaceTag, Subsystem};
pub use error::{BrotocError, Result};
pub use faer::{c64, Mat, MatRef};
pub use spectral::SpectralDecomposition;
