use thiserror::Error;

/// Failures surfaced by solver components.
///
/// Run-level outcomes (iteration limits, linesearch stalls) are reported as a
/// status on the run record, not as errors; these variants cover conditions
/// that make a requested computation impossible.
#[derive(Debug, Error)]
pub enum SolverError {
    /// A problem callback returned an object of the wrong dimension.
    #[error(
        "problem `{problem}`: callback `{callback}` returned dimension {got}, expected {expected}"
    )]
    ContractViolation { problem: String, callback: &'static str, expected: usize, got: usize },

    /// Constraint Jacobian is numerically rank deficient.
    #[error("constraint Jacobian rank deficient: min singular value {sigma_min:.3e} below threshold {threshold:.3e}")]
    LicqFailure { sigma_min: f64, threshold: f64 },

    /// The inertia correction ladder ran out of shifts.
    #[error("KKT matrix inertia could not be corrected with shifts up to {delta_max:.3e}")]
    InertiaCorrectionFailed { delta_max: f64 },

    /// A factorization hit an exactly singular pivot.
    #[error("singular pivot encountered at elimination step {step}")]
    SingularPivot { step: usize },

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SolverError>;
