//! Distribution-to-distribution regression of sensor densities: kernel
//! ridge regression between log-quantile-density transforms, with the
//! responses represented by functional PCA scores.

pub mod baseline;
pub mod benchmark;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod fpca;
pub mod grid;
pub mod io;
pub mod lqd;
pub mod rkhs;
pub mod selection;
pub mod synth;

pub use density::{DensityGrid, DensityPair, GridFunction, MixedDensityGrid};
pub use error::{Error, Result};
pub use grid::Grid;
pub use lqd::LqdFunction;
