// `!(x > 0.0)` is used deliberately so NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod data;
pub mod model;
pub mod sampler;
pub mod spatial;
pub mod stats;
pub mod validation;
