//! Robust functional partial least squares for scalar-on-multiple-function
//! regression.
//!
//! Curves are smoothed into B-spline coefficients ([`basis`]), PLS runs on the
//! Gram-transformed coefficients ([`simpls`]), the robust variant reweights
//! observations through partial robust M-regression ([`prm`]) and fits the
//! final score regression with a bisquare M-estimator ([`robust`]). [`sofr`]
//! ties these into fitted coefficient functions, [`eval`] holds the metrics and
//! cross-validation, and [`simgen`] the Monte Carlo harness.

pub mod basis;
pub mod error;
pub mod eval;
mod linalg;
pub mod prm;
pub mod robust;
pub mod simgen;
pub mod simpls;
pub mod sofr;

pub use basis::{BasisSystem, MultiFunctionalDesign};
pub use error::{Error, Result};
pub use eval::CvReport;
pub use prm::RobustPlsFit;
pub use robust::{HampelConstants, MEstimate};
pub use simgen::{ExperimentConfig, SimDataset};
pub use simpls::PlsFit;
pub use sofr::{FittedSofr, Method};
