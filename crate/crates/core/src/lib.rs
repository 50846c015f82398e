//! Stochastic chemical kinetics with energy parameters.
//!
//! Particles carry a type and a kinetic energy. [`sim`] runs the exact
//! finite-particle chain, [`solver`] integrates the kinetic equations on an
//! energy grid and [`analysis`] checks equilibrium conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod checks;
pub mod cli;
pub mod density;
pub mod error;
pub mod kernel;
pub mod kinetics;
pub mod network;
pub mod par;
pub mod quad;
pub mod rates;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use kinetics::{Particle, ParticleSystem, TypeId, TypeTable};
pub use network::ReactionNetwork;
pub use par::Execution;
