//! Stochastic particle simulation of population balance equations with
//! diffusion, drift, internal coordinates, particle sources, mass-preserving
//! interactions and perfectly reflecting boundaries.
//!
//! The crate is organised around the pieces of the jump-process scheme:
//!
//! - [`geometry`]: level-set domains and the specular reflection map.
//! - [`ensemble`]: the empirical particle measure and its observables.
//! - [`model`]: model ingredients, validators and scenario presets.
//! - [`selection`]: particle-selection measures and majorant tuple sampling.
//! - [`simulator`]: the event loop, fictitious time and retiming.
//! - [`diagnostics`]: numerical checks of generator consistency, martingale
//!   residuals, moment bounds and analytic oracles.
//! - [`io`]: configuration files, replica orchestration and output writers.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensemble;
pub mod geometry;
pub mod io;
pub mod model;
pub mod rng;
pub mod selection;
pub mod simulator;

mod vecops;

pub use ensemble::{EnsembleMeasure, InternalBoxSpec, Particle};
pub use geometry::{LevelSetDomain, Point};
pub use model::{ModelSpec, Scenario};
pub use simulator::{SimParams, SimulationState};
