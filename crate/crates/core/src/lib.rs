//! Adjacent-category autoregressive (ACAR) models for ordinal time series.

pub mod distributions;
pub mod error;
pub mod fit;
pub mod infer;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod optim;
pub mod params;
pub mod series;
pub mod sim;

pub use error::{AcarError, Result};
pub use params::{simulation_design, validate_parameters, Layout, ParameterVector, DEFAULT_EPSILON};
pub use series::{CovariateMatrix, OrdinalSeries};
