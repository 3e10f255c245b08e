use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("coarse grid {coarse} does not divide fine grid {fine} along {axis}")]
    NonDivisibleGrid {
        axis: char,
        fine: usize,
        coarse: usize,
    },

    #[error("invalid channel layout: {0}")]
    InvalidLayout(String),

    #[error("exponent {exponent:.3e} exceeds overflow bound {bound:.3e}")]
    ExponentOverflow { exponent: f64, bound: f64 },

    #[error("nonpositive weight {value:e} on triangle {triangle}")]
    NonPositiveWeight { triangle: usize, value: f64 },

    #[error("dirichlet elimination left no interior unknowns")]
    EmptyInterior,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero or non-finite pivot {value:e} at row {row}")]
    SingularPivot { row: usize, value: f64 },

    #[error("linear solve did not reach tolerance: relative residual {residual:e}")]
    SolverNonConvergence { residual: f64 },

    #[error("snapshot matrix is identically zero")]
    ZeroSnapshots,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular interpolation matrix at DEIM step {step}")]
    SingularDeim { step: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("multiscale basis column {column} of region {region} vanished")]
    ZeroBasisColumn { region: usize, column: usize },

    #[error("newton diverged at time step {step} (iteration {iteration}, |dU| = {norm:e})")]
    NewtonDivergence {
        step: usize,
        iteration: usize,
        norm: f64,
    },

    #[error("newton hit the iteration cap at time step {step} (|dU| = {norm:e})")]
    NewtonMaxIterations { step: usize, norm: f64 },

    #[error("zero reference norm in energy error")]
    ZeroReferenceNorm,

    #[error("config: {0}")]
    Config(String),

    #[error("artifact format: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
