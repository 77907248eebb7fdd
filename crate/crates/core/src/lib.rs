//! Estimation of Gaussian parameters and truncation sets from samples of a
//! Gaussian conditioned on an unknown set.
//!
//! The pipeline has three stages: estimate the Hermite expansion of the
//! weighted indicator `ψ` from truncated samples ([`psi`]), minimize a convex
//! objective by projected SGD to recover the mean and covariance
//! ([`optimizer`]), and threshold the resulting density ratio to recover the
//! set ([`recovery`]).

pub mod batch;
pub mod error;
pub mod gaussian;
pub mod hermite;
pub mod identifiability;
pub mod linalg;
pub mod lower_bound;
pub mod optimizer;
pub mod pipeline;
pub mod psi;
pub mod quadrature;
pub mod recovery;
pub mod region;
pub mod rng;
pub mod sets;
pub mod stats;

pub use batch::SampleBatch;
pub use error::{Error, Result};
pub use gaussian::{GaussianParams, IsotropicCert, TruncatedGaussian};
pub use hermite::{HermiteExpansion, MultiIndex};
pub use region::Region;
pub use sets::SetOracle;
pub use stats::McEstimate;
