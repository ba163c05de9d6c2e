use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Every variant maps onto one of the process exit codes used by the
/// command-line front end (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("flux quantization violated: B0*L1*L2 = {product:.12} is not 2*pi*{flux_quanta}")]
    FluxQuantization { product: f64, flux_quanta: i64 },

    #[error("point ({x}, {y}) lies outside the tabulated field")]
    OutOfTable { x: f64, y: f64 },

    #[error("gauge quadrature did not converge at ({x}, {y}): orders disagree by {gap:e}")]
    QuadratureNonConvergence { x: f64, y: f64, gap: f64 },

    #[error("sparsity pattern incompatible with the standard representation: {0}")]
    IncompatibleSparsity(String),

    #[error("dimension {dim} exceeds the dense cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("assembly needs {nnz} nonzeros, above the budget {budget}")]
    NonzeroBudgetExceeded { nnz: usize, budget: usize },

    #[error("spectral gap {mu0:e} too small for a well-conditioned |H0|^-1 (threshold {threshold:e})")]
    SpectralGapTooSmall { mu0: f64, threshold: f64 },

    #[error("Lanczos breakdown: {0}")]
    LanczosBreakdown(String),

    #[error("window contains {count} eigenvalues, more than max_count = {max_count}")]
    WindowTooWide { count: usize, max_count: usize },

    #[error("iterative solver exhausted its budget after {iterations} iterations (relative residual {residual:e})")]
    SolverBudget { iterations: usize, residual: f64 },

    #[error("shift {re}+{im}i is too close to the spectrum")]
    NearSingularShift { re: f64, im: f64 },

    #[error("eps0 = {eps0:e} is below the finite-volume floor {floor:e}")]
    EpsilonFloor { eps0: f64, floor: f64 },

    #[error("Coulomb center collides with a lattice site at {0:?}")]
    CenterCollision([f64; 3]),

    #[error("operator is not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 solver, 4 hypothesis violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::FluxQuantization { .. } => 2,
            Error::Hypothesis(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
