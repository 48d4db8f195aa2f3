//! Effective wall-laws for Stokes flow over rough boundaries.
//!
//! The numerical core is generic over the scalar type; the `f64` aliases at the
//! bottom of this file are what the command line front end uses.

pub mod cell;
pub mod dense;
pub mod divergence;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod macro_solver;
pub mod real;
pub mod slip;

pub use error::{Error, Result};
pub use real::Real;

pub type SurfacePatch = geometry::SurfacePatch<f64>;
pub type RoughnessProfile = geometry::RoughnessProfile<f64>;
pub type CellCoefficients = geometry::CellCoefficients<f64>;
pub type CellProblemSpec = cell::CellProblemSpec<f64>;
pub type CellSolution = cell::CellSolution<f64>;
pub type SlipField = slip::SlipField<f64>;
pub type MacroSolution = macro_solver::MacroSolution<f64>;
