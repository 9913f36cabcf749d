// `!(x > 0.0)` is used on purpose so that NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod measures;
pub mod numerics;
pub mod quality;
pub mod simulate;
pub mod validate;
