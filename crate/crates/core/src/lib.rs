//! Predictor feedback for discrete-time systems with input delays.
//!
//! The crate covers the whole design loop for plants of the form
//! `x(t+1) = A x(t) + B u(t-r) + d(t) G x(t)` with `|d(t)| <= a`:
//!
//! - [`model`]: plants, nominal stabilizers, the extended (delay-free) state and
//!   the predictor maps `F_i`.
//! - [`backstepping`]: the predictor feedback `u = k(F_r(z))` and its backstepping
//!   Lyapunov function, for linear plants and for user-supplied nonlinear maps.
//! - [`robustness`]: necessary and sufficient uncertainty bounds for the scalar
//!   integrator under nominal predictor feedback.
//! - [`redesign`]: the minimax (Lyapunov-redesigned) feedback and its sampled
//!   certification.
//! - [`simulation`]: closed-loop trajectories under zero, constant, random and
//!   greedy-adversarial disturbances.

pub mod backstepping;
mod error;
pub mod fixtures;
mod linalg;
pub mod model;
pub mod optimize;
pub mod redesign;
pub mod robustness;
pub mod sampling;
pub mod simulation;

pub use error::{Error, Result};
pub use linalg::{ackermann_gain, discrete_lyapunov};
