//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

pub mod linear;
pub mod qp;
pub mod vehicle;

#[allow(unused_imports)]
pub use qp::{brute_force_qp, random_qp, DenseQp};
