//! Invariant image reparameterisation.
//!
//! Finds identifiable and non-identifiable monomial parameter combinations of
//! a mechanistic model from the singular value decomposition of the Jacobian
//! of its auxiliary mapping with respect to log-parameters, then quantifies
//! uncertainty in any coordinate system with profile likelihoods and
//! profile-wise prediction bands.
//!
//! The numerical kernels in [`numerics`] are generic over the scalar type
//! ([`Real`] for `f32`/`f64`, [`Scalar`] additionally for dual numbers);
//! the statistical layers work in `f64` through the aliases below.

pub mod error;
pub mod likelihood;
pub mod model;
pub mod models;
pub mod numerics;
pub mod predict;
pub mod profile;
pub mod reparam;
pub mod table;

pub use error::{Error, Result};
pub use numerics::{Real, Scalar};

/// Dual number over `f64`, the scalar used for model Jacobians.
pub type Dual64 = numerics::Dual<f64>;
pub type Dual32 = numerics::Dual<f32>;
pub type Svd64 = numerics::SvdFactors<f64>;
pub type Bounds = numerics::BoxBounds<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
