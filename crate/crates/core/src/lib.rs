//! Real-time iteration nonlinear model predictive control for vehicle
//! trajectory tracking.

pub mod constraints;
pub mod discretize;
pub mod qp;
pub mod vehicle;
pub mod controller;
pub mod par;
pub mod sim;
