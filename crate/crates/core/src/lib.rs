//! Dynamics of a planar three-link tendon-driven finger.
//!
//! The finger is a serial chain of three revolute joints (MCP, PIP, DIP) with
//! torsional return springs, viscous joint damping and a single tendon whose
//! tension is split between the joints. The crate provides:
//!
//! - [`model`]: Jacobians, inertia matrix, Christoffel coefficients and
//!   energies, each with an independent numerical cross-check.
//! - [`dynamics`]: forward/inverse dynamics for the full model and the reduced
//!   (diagonal inertia, no Coriolis) model, plus a static equilibrium solver.
//! - [`actuation`]: muscle force profiles and the tendon torque split.
//! - [`sim`]: fixed and adaptive integrators, trajectories and energy audits.
//! - [`calibration`]: bounded simplex fitting of damping, springs and torque
//!   fractions against a reference trajectory.
//! - [`validation`]: seeded randomized sweeps of every model oracle.

pub mod actuation;
pub mod calibration;
pub mod dynamics;
mod error;
pub mod model;
pub mod params;
pub mod sim;
pub mod validation;

pub use error::{Error, Result};
pub use params::{FingerParams, JointState};
