//! Path-based solvers for logit stochastic user equilibrium on road networks.
//!
//! The crate models an assignment problem as a fixed point of the logit
//! loading map over a frozen set of routes: flows determine congested costs,
//! costs determine choice probabilities, probabilities determine target
//! flows. Everything downstream of that map is built on matrix-free
//! operators, so equilibria can be computed with averaging schemes,
//! Barzilai-Borwein steps, or an inexact Newton method, and the contraction
//! behavior of the averaging schemes can be predicted from the spectrum of
//! the fixed-point Jacobian.

pub mod equilibrium;
pub mod error;
pub mod krylov;
pub mod network;
pub mod operators;
pub mod pathset;
pub mod solvers;

pub use error::{Error, Result};
