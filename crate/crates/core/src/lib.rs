pub mod adversary;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod io;
pub mod measures;
pub mod paths;
pub mod quadrature;
pub mod quantize;
pub mod rng;
pub mod stats;
