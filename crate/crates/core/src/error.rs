//! Shared error type for every solver in the suite.

/// Unified error for validation, numerical, and I/O failures.
///
/// Variants are grouped so the CLI can map them onto stable exit codes:
/// configuration/validation problems, numerical divergence, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state or value became non-finite during forward simulation.
    #[error("numerical divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },

    /// Backward Riccati integration blew up before reaching t = 0.
    #[error("finite escape during backward integration at t = {t:.6}")]
    FiniteEscape { t: f64 },

    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    /// Explicit PDE step would be unstable; the caller should shrink dt.
    #[error("PDE time step {dt:.3e} violates the stability bound; use dt <= {max_dt:.3e}")]
    Stability { dt: f64, max_dt: f64 },

    /// Input weight times noise covariance is not a scalar multiple of identity.
    #[error("input weight and noise covariance are not proportional to identity (residual {residual:.3e})")]
    LmdpCondition { residual: f64 },

    /// Sample weights could not be formed (non-finite returns).
    #[error("degenerate sample weights: returns contain non-finite values")]
    DegenerateWeights,

    #[error("control Hessian not positive definite at step {step} even with regularization {lambda:.3e}")]
    RegularizationFailure { step: usize, lambda: f64 },

    #[error("singular design matrix; perturbations are parallel and no ridge term was given")]
    SingularDesign,

    #[error("zero second derivative at x = {x}; Newton step undefined")]
    ZeroCurvature { x: f64 },

    #[error("goal is not reachable from the start node")]
    NoPath,

    #[error("graph contains a cycle; no topological order exists")]
    Cyclic,

    #[error("episode exceeded {cap} steps without reaching a terminal state")]
    EpisodeCap { cap: usize },

    #[error("singular linear system in exact policy evaluation")]
    SingularSystem,

    /// Basis vector evaluated to all zeros; projections are undefined.
    #[error("basis functions all vanish at t = {t}")]
    DegenerateBasis { t: f64 },

    #[error("rollout carries no recorded noise sequence")]
    MissingNoises,

    #[error("config error at line {line}: {what}")]
    Config { line: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for the CLI: 1 config, 2 numeric, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec(_)
            | Error::Dimension(_)
            | Error::InvalidArgument(_)
            | Error::Config { .. }
            | Error::NoPath
            | Error::Cyclic
            | Error::MissingNoises => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
