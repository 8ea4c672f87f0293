// negated float comparisons are used deliberately so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, ErrorCategory, Result};
