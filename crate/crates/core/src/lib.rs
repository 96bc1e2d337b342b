//! Spatial censored linear models: SAEM estimation, kriging and local influence.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod influence;
pub mod linalg;
pub mod model;
pub mod mvn;
pub mod optim;
pub mod parallel;
pub mod predict;
pub mod saem;
pub mod simulate;
pub mod special;

pub use covariance::{CovFamily, CovParam, CovParams, CovarianceSpec, DistanceMatrix};
pub use error::{Error, Result};
pub use model::{CensType, ModelParams, SclModel, SpatialDataset, Trend};
pub use mvn::{Rectangle, RngState};
pub use parallel::Execution;
pub use predict::{krige, predict_saem, Method, PredictionResult, Sites};
pub use saem::{saem_fit, SaemConfig, SaemFit, SearchBox};
