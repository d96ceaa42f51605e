//! Factorized time evolution of a charged particle in a uniform magnetic field
//! whose symmetric-gauge vector potential is dragged along a path R(t).
//!
//! The propagator is built as `U_L = gauge(t) · M(t) · D(t) · K(t)`:
//! a gauge phase, a path-ordered magnetic translation of the guiding center,
//! the free Landau-level evolution, and a time-ordered displacement of the
//! cyclotron mode that captures nonadiabatic effects. A brute-force
//! exponential integrator serves as the independent reference.

pub mod analysis;
pub mod drive_path;
pub mod error;
pub mod fock_algebra;
pub mod landau_model;
pub mod propagator;
pub mod quadrature;
pub mod reference_integrator;
pub mod units;

pub use error::{Error, Result};
