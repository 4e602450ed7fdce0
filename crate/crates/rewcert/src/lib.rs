//! Certified expected-reward and tail bounds for noisy control loops.
//!
//! A deterministic controller runs in closed loop with known dynamics, but the
//! state it observes is perturbed by bounded stochastic noise. This crate
//! trains neural *reward martingales* — scalar networks whose expected value
//! never increases (or never decreases) along perturbed trajectories — and
//! validates them soundly on a discretization of the state space. A validated
//! pair of certificates encloses the expected cumulative reward from any
//! initial state, and a validated ranking certificate yields exponential tail
//! bounds on the reward distribution.
//!
//! The pipeline has three layers:
//!
//! * geometry and noise ([`space`], [`noise`]), interval arithmetic and
//!   forward-mode jets ([`arith`]), and scalar networks ([`net`]);
//! * environments, policies and the perturbed step semantics ([`env`]),
//!   state-space grids ([`grid`]), training ([`learn`]) and sound validation
//!   ([`verify`]);
//! * certified bounds ([`certify`]), Monte-Carlo cross-checks ([`sim`]), and
//!   the config-driven pipeline ([`config`], [`pipeline`]) behind the CLI.
//!
//! Every iteration of every algorithm draws randomness from a caller-seeded
//! generator, so identical seeds reproduce identical runs bit for bit.

pub mod arith;
pub mod certify;
pub mod config;
pub mod env;
pub mod error;
pub mod grid;
pub mod learn;
pub mod net;
pub mod noise;
pub mod pipeline;
pub mod sim;
pub mod space;
pub mod verify;

pub use error::{Error, Result};
