//! Numerical laboratory for the gradient flow of `∫|Rm|² dV` on
//! rotationally symmetric metrics on the four-sphere.

// Index loops mirror tensor notation; `!(x <= tol)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod algebra;
pub mod error;

pub use error::{Error, Result};
pub mod geometry;
pub mod metric;

pub use geometry::{compute_geometry, GeometryCache};
pub use metric::{InvariantSym2Field, RadialField, WarpedMetric};
pub mod flow;
pub mod experiments;
pub mod functionals;
