//! Simulation and numerical verification toolkit for near-critical bivariate
//! triangular Hawkes processes and their rough stochastic Volterra scaling limit.

pub mod analytics;
pub mod error;
pub mod fft;
pub mod grid;
pub mod hawkes;
pub mod kernels;
pub mod params;
pub mod rng;
pub mod special;
pub mod stats;
pub mod sve;

pub use error::{Error, Result};
pub use grid::{AtZero, GridFunction};
