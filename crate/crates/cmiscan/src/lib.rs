//! Multiscale rectangle-scan tests for conditional moment inequalities.
//!
//! The library tests whether conditional moment inequalities
//! `E[m_j(W, θ) | X] >= 0` hold at a parameter value `θ`, by scanning
//! studentized local averages of the moments over boxes of every location
//! and scale down to a truncation side length `t_n`. Large values of the
//! scan statistic are evidence against the inequalities; critical values
//! come from an analytic extreme-value approximation, a refined tail
//! approximation, a Gaussian multiplier simulation, or a least-favorable
//! simulation. Confidence regions are produced by inverting the test over a
//! parameter grid, and a Monte Carlo harness estimates finite-sample size
//! and power of the whole pipeline.

pub mod cli;
pub mod critval;
pub mod data;
pub mod error;
pub mod geometry;
pub mod inversion;
pub mod models;
pub mod montecarlo;
pub mod rng;
pub mod scan;

pub use error::{Error, Result};
