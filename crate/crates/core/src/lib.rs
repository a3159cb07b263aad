//! Numerical homogenization of parabolic problems with two spatial
//! (ε, ε²) and two temporal (ε^q, ε^r) microscales.
//!
//! The effective tensor b of the elliptic limit −∇·(b∇u) = f is computed by
//! classifying the exponents (p, q, r) into one of 13 regimes, solving the
//! regime's nested cell problems and averaging. Fine-scale reference
//! solutions and convergence diagnostics live in [`finescale`] and
//! [`verify`].

pub mod cell;
pub mod coeffs;
pub mod effective;
pub mod expr;
pub mod finescale;
pub mod linalg;
pub mod macroscale;
pub mod mesh;
pub mod regime;
pub mod tensor;
pub mod verify;

pub use cell::{CellCorrector, CellError, CellGrid, CellOptions};
pub use coeffs::{CoeffError, CoefficientField, FineScaleProblem, Profile};
pub use effective::{compute_effective_tensor, EffectiveError, EffectiveResult, EffectiveTensor, NumericsConfig};
pub use finescale::{FineError, FineScaleOptions, FineScaleSolution};
pub use macroscale::{MacroError, MacroMesh, MacroSolution};
pub use regime::{classify_regime, RegimeDescriptor, RegimeError, ScaleExponents};
pub use tensor::Tensor;
pub use verify::VerifyError;

use thiserror::Error;

/// Any failure of the library, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Coefficient(#[from] CoeffError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Macro(#[from] MacroError),
    #[error(transparent)]
    Fine(#[from] FineError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl Error {
    /// True for failures of the inputs rather than of a solver.
    pub fn is_validation(&self) -> bool {
        let c = self.code();
        c.starts_with("invalid_") || matches!(c, "non_coercive" | "over_budget" | "unresolved_test")
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Regime(_) => "invalid_exponents",
            Error::Coefficient(_) => "invalid_coefficient",
            Error::Cell(e) => cell_code(e),
            Error::Effective(e) => effective_code(e),
            Error::Macro(e) => macro_code(e),
            Error::Fine(e) => fine_code(e),
            Error::Verify(e) => match e {
                VerifyError::Unresolved { .. } => "unresolved_test",
                VerifyError::Precondition(_) => "invalid_diagnostic",
                VerifyError::Fine(f) => fine_code(f),
                VerifyError::Effective(inner) => effective_code(inner),
                VerifyError::Macro(inner) => macro_code(inner),
            },
        }
    }
}

fn effective_code(e: &EffectiveError) -> &'static str {
    match e {
        EffectiveError::Regime(_) => "invalid_exponents",
        EffectiveError::Coefficient(_) => "invalid_coefficient",
        EffectiveError::Config(_) | EffectiveError::AxisMismatch { .. } => "invalid_numerics",
        EffectiveError::Cell { source, .. } => cell_code(source),
        EffectiveError::NonCoercive { .. } => "non_coercive",
    }
}

fn macro_code(e: &MacroError) -> &'static str {
    match e {
        MacroError::NonCoercive { .. } => "non_coercive",
        MacroError::Mesh(_) => "invalid_mesh",
        MacroError::NonFiniteSource { .. } => "invalid_source",
        MacroError::Solve { .. } => "solver_not_converged",
    }
}

fn cell_code(e: &CellError) -> &'static str {
    match e {
        CellError::Grid(_) | CellError::Options(_) | CellError::DimensionMismatch { .. } | CellError::IncompleteDirections { .. } => {
            "invalid_numerics"
        }
        CellError::Misaligned { .. } => "invalid_grid_alignment",
        CellError::Coefficient(_) => "invalid_coefficient",
        CellError::NonCoercive { .. } => "non_coercive",
        CellError::Solve(_) => "solver_not_converged",
        CellError::Stagnation { .. } => "period_map_stagnated",
        CellError::NotConverged { .. } => "period_map_not_converged",
    }
}

fn fine_code(e: &FineError) -> &'static str {
    match e {
        FineError::Epsilon(_) | FineError::Options(_) => "invalid_fine_options",
        FineError::OverBudget { .. } => "over_budget",
        FineError::Coefficient(_) => "invalid_coefficient",
        FineError::NonCoercive { .. } => "non_coercive",
        FineError::Solve { .. } => "solver_not_converged",
        FineError::EmptyWindow | FineError::DomainMismatch => "invalid_diagnostic",
    }
}
