//! Core of the xsys explanation stack.

pub mod contracts;
pub mod digest;
pub mod error;
pub mod scalar;

pub use error::{Error, ErrorCode, Result};
pub use scalar::Scalar;
pub mod linalg;
pub mod matrix;
pub mod lrp;
pub mod nn;
pub mod store;
pub mod dataset;
pub mod model_service;

/// The concrete network type used by the services.
pub type Network = nn::Mlp<f64>;
/// Relevance trace over `f64`.
pub type RelevanceTrace = lrp::RelevanceTrace<f64>;
pub type Matrix64 = matrix::Matrix<f64>;
pub mod search;
pub mod inspection;
pub mod provision;
pub mod fixtures;
