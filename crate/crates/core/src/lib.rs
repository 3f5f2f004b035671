// NaN must fail validation, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adpen;
pub mod autodiff;
pub mod cohort;
pub mod explain;
pub mod likelihood;
pub mod harness;
