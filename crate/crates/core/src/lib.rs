// NaN must fail positivity and finiteness checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod ad;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod lgc;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod models;
pub mod sampler;
pub mod spd;
pub mod special;

pub use error::{Error, Result};
