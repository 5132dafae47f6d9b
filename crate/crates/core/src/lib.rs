//! Dynamic multi-microgrid formation with a convolutional deep Q-network.
//!
//! A distribution feeder with distributed generators is split into islands by
//! opening and closing switchable lines. [`topology`] decides which switch
//! configurations form one radial tree per generator, [`powerflow`] solves each
//! island, [`env`] wraps both in an episodic decision process, and [`qnet`] /
//! [`train`] learn a switching policy. [`bench`] compares the learned policy
//! against a fixed-configuration baseline.
//!
//! The numeric core is generic over [`Scalar`] (`f32`, `f64`); the reward
//! terms are additionally generic over exact [`Rational`] arithmetic.

pub mod bench;
pub mod env;
pub mod error;
pub mod grid;
pub mod powerflow;
pub mod qnet;
pub mod scalar;
pub mod topology;
pub mod train;

pub use error::{Error, Result};
pub use grid::NetworkCase;
pub use scalar::{Field, Scalar};
pub use topology::{SwitchConfig, TransformedGraph};

/// Exact arithmetic for reward terms.
pub type Rational = num_rational::Ratio<i64>;

pub type QNetwork64 = qnet::QNetwork<f64>;
pub type QNetwork32 = qnet::QNetwork<f32>;
pub type Environment64<'a> = env::Environment<'a, f64>;
pub type Environment32<'a> = env::Environment<'a, f32>;
pub type Scenario64 = env::Scenario<f64>;
pub type PfSolution64 = powerflow::PfSolution<f64>;
