//! Solver suite for stochastic optimal control and reinforcement learning.
//!
//! Modules:
//! - [`sde`]: Brownian sampling, Euler–Maruyama integration, 1-D density PDE.
//! - [`lq`]: the eight LQR/LQG Riccati solvers (discrete/continuous × finite/infinite).
//! - [`ilqc`]: iterative LQ trajectory optimization for nonlinear systems.
//! - [`path_integral`]: linearly-solvable problems, desirability Monte Carlo,
//!   path-integral controllers, and the PI2 policy-improvement family.
//! - [`policy_gradient`]: finite-difference gradient estimation and descent,
//!   plus a 1-D Newton–Raphson extremum finder.
//! - [`tabular_rl`]: finite MDPs, dynamic programming, Monte Carlo control,
//!   Q-learning, and backward shortest path on DAGs.
//! - [`testbeds`]: canonical problem instances wired for every solver.
//! - [`cli`]: config parsing and the experiment runner behind the `ocrl` binary.

pub mod cli;
pub mod csvio;
pub mod error;
pub mod grid;
pub mod ilqc;
pub mod linalg;
pub mod lq;
pub mod path_integral;
pub mod policy_gradient;
pub mod rng;
pub mod sde;
pub mod tabular_rl;
pub mod testbeds;

pub use error::{Error, Result};
pub use grid::TimeGrid;
