//! Cellwise-robust multivariate statistics.
//!
//! Cell outlier detection, robust location and covariance estimation with
//! incomplete data, plug-in regression, executable breakdown attacks and
//! cellwise-robust correspondence analysis, on top of a small dense linear
//! algebra core.

pub mod breakdown;
pub mod ca;
pub mod data;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod regress;
pub mod sim;
mod svg;
pub mod univar;

pub use data::DataMatrix;
pub use detect::{CellFlags, Detector};
pub use error::{Error, Result};
pub use estimate::{CovMethod, CovModel};
pub use regress::RegFit;
