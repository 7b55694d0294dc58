//! Simulation and optimal control of a single continuous variable in
//! modulated nonharmonic potential wells.

pub mod analysis;
pub mod config;
pub mod crab;
pub mod error;
pub mod spectrum;
pub mod states;
pub mod grid;
pub mod io;
pub mod noise;
pub mod optimize;
pub mod potential;
pub mod protocols;
pub mod propagate;
pub mod rng;

pub use error::{Error, Result};
