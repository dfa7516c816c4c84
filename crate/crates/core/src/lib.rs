// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod flux;
pub mod kinetic;
pub mod macro_solver;
pub mod model;
pub mod quadrature;
pub mod run;
pub mod tridiag;
