//! Inverse F-curvature flow of spacelike graphs in ARW model spacetimes.

// index loops mirror the tensor notation; `!(a > b)` comparisons reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod arw;
pub mod commands;
pub mod config;
pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod hypersurface;
pub mod io;
pub mod oracle;
pub mod tensor;
pub mod transition;

pub use error::{Error, Result};
