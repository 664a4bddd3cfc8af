//! Riemannian geometry on manifolds described by charts and transition maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charts;
pub mod check;
pub mod error;
pub mod functionals;
pub mod geodesic;
pub mod metric;
pub mod numerics;
pub mod variation;

pub use error::{Error, Result};
