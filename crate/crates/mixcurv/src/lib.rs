#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod euler_lagrange;
pub mod expr;
pub mod gallery;
pub mod geometry;
pub mod jets;
pub mod linalg;
pub mod quadrature;
pub mod structure;
pub mod variations;
