//! Covariance functionals and weighted limit theorems for isotropic random
//! fields whose spectral density is singular on spheres `|l| = a_i`.

pub mod covariance;
pub mod error;
pub mod limits;
pub mod quad;
pub mod sim;
pub mod specfun;
pub mod spectral;
pub mod weights;

pub use covariance::{ClosedForm, CovarianceCurve, Functional};
pub use error::{Error, Result};
pub use limits::{CovarianceMatrixResult, NormalizedFunctionalSpec};
pub use quad::{IntegralResult, QuadratureSpec, SingularPoint};
pub use sim::HarmonicFieldSampler;
pub use specfun::BesselOrder;
pub use spectral::{CyclicalSpectralDensity, Profile, Singularity};
pub use weights::{KernelSpec, WeightKernel};
