//! Desk-scale simulation of an adiabatic quantum algorithm for the travelling
//! salesman problem.
//!
//! The crate builds truncated bosonic Fock spaces over link, hooker and
//! marker modes, assembles the initial, filtering and target Hamiltonians,
//! propagates the interpolated Schrödinger equation, and evaluates the
//! time-energy characteristic times that bound how fast any such run can
//! move. A brute-force tour oracle and an unstructured-search harness serve
//! as classical and analytic ground truth.

pub mod bounds;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod linalg;
pub mod schedule;
pub mod search;
pub mod sparse;
pub mod tour_oracle;
pub mod tsp_model;

pub use error::{Error, Result};
pub use num_complex::Complex64;
