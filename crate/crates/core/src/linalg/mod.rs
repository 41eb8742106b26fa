//! Cholesky factorizations and their reverse-mode rules.

mod dense;
mod ordering;
mod sparse;

pub use dense::{cholesky_adjoint, DenseCholesky};
pub use ordering::{minimum_degree, Ordering};
pub use sparse::{SparseCholesky, SymbolicCholesky};
