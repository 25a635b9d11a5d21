//! Simulation library for quantum-battery charging protocols: ergotropy,
//! stored work and stabilizer Rényi entropy under XXZ, complex SYK,
//! random brick-wall and pulsed-XY dynamics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod hilbert;
pub mod models;
pub mod observables;
pub mod selftest;
pub mod stabilizer;

pub use error::{Error, Result};
