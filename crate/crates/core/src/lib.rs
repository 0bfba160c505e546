//! Simulation and exact computation for the seed bank coalescent.

pub mod campaign;
pub mod exact;
pub mod laws;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod runner;
pub mod sampling;
pub mod simulator;
pub mod stats;
pub mod tridiag;
pub mod verify;
