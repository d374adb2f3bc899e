//! Polynomial variations of stationary and near-stationary Gaussian
//! sequences: Hermite decompositions, exact covariance kernels, exact
//! samplers, variation statistics with exact cumulants, Berry-Esséen bound
//! constants and moment-map estimators for fractional OU models.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

// `!(x > 0)` is how parameter checks reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cov_models;
pub mod error;
pub mod estimators;
pub mod exact_sampler;
pub mod hermite_basis;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod rate_bounds;
pub mod scalar;
pub mod special;
pub mod variation_stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` kernel.
pub type Kernel = cov_models::CovKernel<f64>;
/// `f64` Hermite-basis polynomial.
pub type Poly = hermite_basis::HermitePoly<f64>;
/// `f64` process model.
pub type Model = cov_models::ProcessModel<f64>;
