//! Analysis toolkit for time-varying stochastic chains.
//!
//! A chain here is a sequence of row-stochastic matrices A(t) driving
//! the averaging dynamics x(t+1) = A(t) x(t). The static theory pins
//! everything on the Perron eigenvector; once the matrix varies in
//! time, its role is played by an absolute probability sequence pi(t)
//! satisfying pi(t)' = pi(t+1)' A(t), and the questions shift to
//! whether such a sequence stays uniformly positive, how weight moves
//! across cuts of the agent set, and which groups of agents end up
//! agreeing.
//!
//! The crate provides:
//!
//! * backward products, cuts and cross-cut flows ([`chain_core`]);
//! * cut-balance ratios and windowed reciprocity certificates with the
//!   smallest admissible excess ([`reciprocity`]);
//! * backward propagation of absolute probability sequences, positivity
//!   probes and ergodicity checks ([`absolute_probability`]);
//! * constructive lower bounds on product diagonals and cross entries,
//!   with direct verification against chains ([`bounds`]);
//! * truncated infinite flow graphs, ergodic class extraction and jets
//!   ([`flow_graph`]);
//! * trajectory simulation, epoch selection and contraction checks for
//!   the quadratic comparison function ([`dynamics`]);
//! * piecewise-constant continuous-time chains, their transition
//!   operators and the continuous reciprocity certificate
//!   ([`continuous_time`]);
//! * seeded random chain families with closed-form expected chains
//!   ([`random_chains`]) and a plain text file format ([`format`]).
//!
//! Everything randomized is counter-based and deterministic in the
//! seed, independent of thread count and call order.

#![forbid(unsafe_code)]

pub mod absolute_probability;
pub mod bounds;
pub mod chain_core;
pub mod continuous_time;
pub mod dynamics;
pub mod error;
pub mod flow_graph;
pub mod format;
pub mod random_chains;
pub mod reciprocity;

pub use error::{Error, Result};
