//! Classified failures: every error leaving a subcommand maps to an exit
//! status and a stable reason code.

use homog_core::{CellError, EffectiveError, Error, FineError, VerifyError};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Bad inputs; exit status 2.
    Validation,
    /// A solver or the file system failed; exit status 3.
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub code: &'static str,
    pub message: String,
    /// Machine-readable specifics of the failure, when there are any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl Failure {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Validation, code, message: message.into(), details: None }
    }

    pub fn solver(code: &'static str, message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Solver, code, message: message.into(), details: None }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Validation => 2,
            FailureKind::Solver => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for Failure {}

fn fine_details(e: &FineError) -> Option<Value> {
    match e {
        FineError::OverBudget { epsilon, steps, nodes, bytes, minimal_epsilon } => {
            Some(json!({ "epsilon": epsilon, "steps": steps, "nodes": nodes, "bytes": bytes, "minimal_epsilon": minimal_epsilon }))
        }
        FineError::NonCoercive { x, t } => Some(json!({ "x": x, "t": t })),
        _ => None,
    }
}

fn cell_details(e: &CellError) -> Option<Value> {
    match e {
        CellError::Stagnation { sweeps, history } | CellError::NotConverged { sweeps, history } => {
            Some(json!({ "sweeps": sweeps, "defect_history": history }))
        }
        CellError::NonCoercive { y, s, min_eigenvalue } => Some(json!({ "y": y, "s": s, "min_eigenvalue": min_eigenvalue })),
        CellError::Misaligned { axis, position, nodes } => Some(json!({ "axis": axis, "position": position, "nodes": nodes })),
        _ => None,
    }
}

fn effective_details(e: &EffectiveError) -> Option<Value> {
    match e {
        EffectiveError::Cell { stage, point, source } => {
            let mut d = json!({ "stage": stage, "point": format!("{point:?}") });
            if let Some(extra) = cell_details(source) {
                d["cell"] = extra;
            }
            Some(d)
        }
        EffectiveError::NonCoercive { eigenvalues } => Some(json!({ "eigenvalues": eigenvalues })),
        _ => None,
    }
}

fn details(e: &Error) -> Option<Value> {
    match e {
        Error::Cell(c) => cell_details(c),
        Error::Effective(c) => effective_details(c),
        Error::Fine(f) => fine_details(f),
        Error::Verify(VerifyError::Fine(f)) => fine_details(f),
        Error::Verify(VerifyError::Effective(c)) => effective_details(c),
        Error::Verify(VerifyError::Unresolved { factor, step, period }) => {
            Some(json!({ "factor": factor, "step": step, "period": period }))
        }
        _ => None,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = if e.is_validation() { FailureKind::Validation } else { FailureKind::Solver };
        Failure { kind, code: e.code(), message: e.to_string(), details: details(&e) }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                homog_core::Error::from(e).into()
            }
        })*
    };
}

from_core!(
    homog_core::RegimeError,
    homog_core::CoeffError,
    homog_core::EffectiveError,
    homog_core::MacroError,
    homog_core::FineError,
    homog_core::VerifyError
);

/// Turns an I/O or serialization error into a solver-class failure.
pub fn io_failure(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::solver("io_error", format!("{context}: {e}"))
}
