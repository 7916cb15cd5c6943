//! Simulation of the heat flow for α-Dirac-harmonic maps from flat spin tori
//! into round spheres and flat circle-product tori.
//!
//! The crate is organised as
//! - [`geometry`]: the discrete torus, spectral calculus and target geometry,
//! - [`dirac`]: spinors, the Dirac operator along a map, its spectrum and the
//!   kernel-constraint solver,
//! - [`flow`]: the coupled evolution, energy bookkeeping, singular times,
//!   restarts and α-continuation,
//! - [`analysis`]: local energies, concentration, Sobolev diagnostics and
//!   homotopy invariants,
//! - [`cli`]: run configuration, output formats and the command drivers.

pub mod analysis;
pub mod cli;
pub mod dirac;
pub mod flow;
pub mod geometry;

mod binio;
