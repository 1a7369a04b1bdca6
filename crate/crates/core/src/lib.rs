//! Multiscale likelihood-ratio scanning for anomalies in `d`-dimensional
//! grids of exponential-family observations.
//!
//! The crate computes the penalized scan statistic over hypercube or
//! hyperrectangle systems, calibrates it against Monte-Carlo samples of
//! its Gaussian surrogate, reports significant regions with family-wise
//! error control and evaluates power, both by simulation and through the
//! asymptotic power expansion.

pub mod calibrate;
pub mod detect;
pub mod error;
pub mod nef;
pub mod power;
pub mod regions;
pub mod rng;
pub mod scan;


pub use error::{Error, Result};
pub use nef::{MeanParam, NefModel};
pub use regions::{Region, RegionKind, RegionSystem, ScalePolicy, SetFamily};
pub use calibrate::{quantile, simulate_null, QuantileTable, TableMeta};
pub use detect::{detect, DetectionReport, Mode};
pub use power::{AnomalySpec, PowerEstimate};
pub use scan::{scan_statistic, Backend, Field, ScanResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
