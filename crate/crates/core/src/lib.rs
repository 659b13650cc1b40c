//! # formation-core
//!
//! Deterministic simulator for robust cooperative close-formation flight of
//! fixed-wing UAVs.
//!
//! The control stack has three parts:
//!
//! - [`planner`]: a virtual structure (rigid body) whose center follows a
//!   navigation model; per-vehicle references are rigid offsets from the
//!   center, smoothed by a bank of graph-coupled cooperative filters.
//! - [`controller`]: the baseline cooperative tracking law plus an
//!   uncertainty and disturbance estimator (UDE) that cancels lumped
//!   aerodynamic disturbances.
//! - [`vehicle`]: point-mass fixed-wing dynamics and the exact conversions
//!   between Cartesian virtual controls and thrust / lift / bank commands.
//!
//! [`wake`] supplies synthetic and horseshoe-vortex disturbances, [`graph`]
//! the communication topology and its spectral checks, and [`sim`] the fixed
//! step integration, scenario files, logs and metrics. [`checks`] bundles the
//! stability properties as runnable suites.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod controller;
pub mod graph;
pub mod planner;
pub mod sim;
pub mod vehicle;
pub mod wake;

use nalgebra::Vector3;

/// Three-component vector in the inertial NED frame (or per-axis gains).
pub type Vec3 = Vector3<f64>;

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;
