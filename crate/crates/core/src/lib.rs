//! Multiscale varifold construction and decay-rate experiments.
//!
//! The crate builds an explicit integral varifold in `R^(n+1)`: the plane
//! `T = {0} x R^n` together with a dyadic family of small pillbox surfaces
//! stacked above it, one per slab cell. Their sizes follow prescribed power
//! laws, so height, tilt and mass quantities measured in cubes about points
//! of `T` decay at controlled rates while `int |H|^p` stays finite.
//!
//! Modules:
//! - [`dyadic_lattice`]: exact cell families and counts.
//! - [`revolved_profile`]: the unit pillbox and integrals over surfaces of
//!   revolution.
//! - [`varifold_core`]: discrete varifolds and their basic functionals.
//! - [`example_generator`]: parameter derivation and the assembled example.
//! - [`scaling_analysis`]: dyadic profiles, slope fits, excess-set scans.
//! - [`isoperimetric_lab`]: isoperimetric quotients and density bounds.
//! - [`report`]: CSV and JSON emission.

pub mod dyadic_lattice;
pub mod error;
pub mod example_generator;
pub mod isoperimetric_lab;
pub mod quadrature;
pub mod report;
pub mod revolved_profile;
pub mod scaling_analysis;
pub mod varifold_core;

pub use error::{Error, Result};
