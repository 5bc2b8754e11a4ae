//! Boundary conditions, contraction semigroups and passive simulation for
//! the wave equation on staggered grids.
//!
//! * [`relation`]: dissipative relations on a finite boundary space and
//!   their contraction parametrization.
//! * [`certify`]: generation verdicts for conditions `W1 B0 x + W2 B⊥ x = 0`,
//!   checked against a matrix exponential oracle.
//! * [`triplet`]: staggered `div`/`grad` pairs with trace maps.
//! * [`wave`], [`sim`]: the damped, boundary-controlled system and its
//!   energy-exact time integration.
//! * [`config`], [`report`]: JSON configuration and deterministic output.

pub mod certify;
pub mod config;
pub mod error;
pub mod numerics;
pub mod relation;
pub mod report;
pub mod sim;
pub mod triplet;
pub mod wave;

pub use error::{Error, Result};
