//! Sparse basis-function iterative learning control.
//!
//! A trial-domain (lifted) simulation of a SISO feedback loop, feedforward bases built from the
//! reference, a quadratic (norm-optimal) learning update, and a sparse update that picks a fixed
//! number of basis columns with LARS/LASSO and refits them by least squares.

pub mod basis;
pub mod config;
pub mod engine;
pub mod error;
pub mod lifted;
mod linalg;
pub mod metrics;
pub mod norm_optimal;
pub mod par;
pub mod report;
pub mod sparse;
pub mod trajectory;

pub use error::{Error, ErrorCategory, Result};
