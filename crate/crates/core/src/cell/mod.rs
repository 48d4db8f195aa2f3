//! Boundary-layer cell problem on a truncated periodic half-cylinder.

mod analysis;
mod grid;
mod oracle;
mod solve;

use serde::{Deserialize, Serialize};

pub use analysis::{
    boundary_layer_constant, decay_fit, energy_matrix, jump_residual, jump_residual_at, shift_solution, slip_matrix,
    DecayFit, SlipMatrixResult,
};
pub use grid::{CellGrid, Frame};
pub use oracle::{interface_trace, mode_oracle, oracle_comparison, ModeCoefficient, ModePrediction, OracleComparison};
pub use solve::{solve_cell, CellResiduals, CellSolution, CellSystem};

use crate::geometry::{CellCoefficients, RoughnessProfile};
use crate::linalg::SaddleMethod;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResolution {
    /// Cells per period in each lateral direction.
    pub lateral: usize,
    /// Cells across the whole vertical extent [-L, max γ].
    pub depth: usize,
}

impl CellResolution {
    pub fn new(lateral: usize, depth: usize) -> Self {
        CellResolution { lateral, depth }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellProblemSpec<T> {
    pub coeffs: CellCoefficients<T>,
    pub profile: RoughnessProfile<T>,
    /// Jump vector λ in physical components.
    pub jump_vector: Vec<T>,
    /// Truncation depth L; `None` selects max(3, ceil(18.5/α)).
    pub truncation_depth: Option<T>,
    pub resolution: CellResolution,
    pub tol: T,
    pub method: SaddleMethod,
}

impl<T: Real> CellProblemSpec<T> {
    pub fn new(coeffs: CellCoefficients<T>, profile: RoughnessProfile<T>, jump_vector: Vec<T>, resolution: CellResolution) -> Self {
        CellProblemSpec {
            coeffs,
            profile,
            jump_vector,
            truncation_depth: None,
            resolution,
            tol: T::lit(1e-11),
            method: SaddleMethod::SchurCg,
        }
    }

    pub fn with_depth(mut self, depth: T) -> Self {
        self.truncation_depth = Some(depth);
        self
    }
}

/// Default truncation depth max(3, ceil(18.5/α)), so that e^{-αL} < 1e-8.
pub fn default_depth<T: Real>(alpha: T) -> T {
    T::lit(3.0).max((T::lit(18.5) / alpha).ceil())
}
