//! Simulation and analysis of secondary frequency control in lossless power
//! networks: swing dynamics, integral-type controllers, steady states,
//! H2 performance, Lyapunov/ISS certificates and gain tuning.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linear_analysis;
pub mod lyap;
pub mod lyapunov_cert;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod report;
pub mod scenario;
pub mod steady_state;
pub mod svg;

pub use error::{GridError, Result};
