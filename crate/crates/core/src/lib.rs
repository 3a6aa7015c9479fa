//! Time-optimal frictionless expansion of a one-dimensional condensate in a
//! harmonic trap.
//!
//! - [`elliptic`]: incomplete elliptic integrals (Carlson symmetric forms).
//! - [`dynamics`]: the reduced scale-factor system, its propagator and
//!   multi-switch alternatives.
//! - [`synthesis`]: the optimal XY schedule with closed-form and quadrature
//!   transit times.
//! - [`schedules`]: smooth reference schedules and their minimal feasible
//!   durations.
//! - [`gpe`]: split-step Gross–Pitaevskii validation of the scaling solution.
//!
//! Time is measured in units of `1/ω₀` throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod gpe;
pub mod par;
pub mod quadrature;
pub mod schedules;
pub mod synthesis;

pub use error::{Error, Result};
pub use par::Execution;
