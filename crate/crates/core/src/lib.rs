//! Wideband relative transfer function estimation.
//!
//! The crate estimates the relative transfer function (RTF) of a single
//! target across all frequency bins jointly, from a stacked
//! spectral-spatial covariance, and compares it to the per-bin covariance
//! whitening estimator and to Cramér-Rao-type lower bounds.
//!
//! Stacked vectors are frequency-major: entry `(bin k, sensor m)` lives at
//! index `k * M + m`.

pub mod error;
pub mod covariance;
pub mod crb;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rtf;
pub mod scenario;
pub mod speech;
pub mod stft;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, HermitianMatrix, C64};
pub use model::Layout;
