//! Random projections of disjoint convex bodies.
//!
//! The crate answers one question from several angles: when does an `M x N`
//! Gaussian projection keep two (or many) disjoint ellipsoids disjoint?
//!
//! * [`bodies`] holds ellipsoids, balls, circular cones and Gaussian projections.
//! * [`separation`] decides disjointness with checkable certificates.
//! * [`widths`] and [`escape`] turn geometry into Gaussian-width bounds and
//!   required projection ranks.
//! * [`experiments`] runs the Monte Carlo phase-transition sweeps.
//! * [`pca`] and [`classify`] compare random projection with PCA on labeled data.
//!
//! Heavy sweeps go through [`exec::Exec`], which runs on rayon when the
//! `parallel` feature is enabled and sequentially otherwise. Results never
//! depend on the execution mode.

// `!(x > 0.0)` guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bodies;
pub mod classify;
pub mod error;
pub mod escape;
pub mod exec;
pub mod experiments;
pub mod pca;
pub mod rng;
pub mod separation;
pub mod widths;

pub use error::{Error, Result};

/// Version of the JSON/CSV schemas written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Library version, as reported by the command line tool.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
