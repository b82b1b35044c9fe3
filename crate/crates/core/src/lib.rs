//! Opinion dynamics on weighted undirected networks.
//!
//! Covers the Abelson/DeGroot averaging model, the Taylor (Friedkin-Johnsen)
//! model with stubborn agents, and the nonlinear Friedkin-Johnsen model whose
//! steady states are Nash equilibria of a network game. See [`dynamics`] for
//! trajectories, [`equilibrium`] for steady states and [`cli`] for the
//! experiment harness.

pub mod cli;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod graph;
pub mod models;

pub use dynamics::{integrate, iterate_discrete, IntegratorConfig, Method, Trajectory};
pub use equilibrium::{
    certify, multistart_uniqueness, newton_solve, taylor_equilibrium, verify_nash, EquilibriumCertificate, SolverConfig,
};
pub use error::{Error, Result};
pub use graph::Network;
pub use models::{LinearFjParams, Model, NfjParams, TaylorParams};
