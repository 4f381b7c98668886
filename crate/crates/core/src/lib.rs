//! Stochastic social learning in a population of bandit agents.
//!
//! `N` agents repeatedly choose among `K` Bernoulli arms, either exploring
//! uniformly or copying a randomly sampled peer, and keep an arm only when it
//! pays off. The population is a continuous-time Markov chain on occupancy
//! vectors; as `N` grows it concentrates on a mean-field ODE.
//!
//! - [`model`]: parameters, states and transition directions.
//! - [`ctmc`]: transition rates and exact simulators (Gillespie and agent level).
//! - [`jumpchain`]: embedded jump chain, best-arm walk and its coupling to a
//!   biased standard walk.
//! - [`meanfield`]: drift, RK4 integration and convergence diagnostics.
//! - [`bounds`]: closed-form lower bounds and deviation constants.
//! - [`harness`]: Monte Carlo experiments, statistics and output.

pub mod bounds;
pub mod ctmc;
pub mod error;
pub mod harness;
pub mod jumpchain;
pub mod meanfield;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use model::{ModelParams, ScaledState, SystemState, TransitionDirection};
