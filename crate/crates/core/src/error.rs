use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("{function} couples neighbouring coordinates and needs dimension >= 2, got {dim}")]
    ChainedDimension { function: String, dim: usize },
    #[error("degenerate box on axis {axis}: lower {lower} >= upper {upper}")]
    InvalidBox { axis: usize, lower: f64, upper: f64 },
    #[error("invalid step size {0}: must be positive and finite")]
    InvalidStepSize(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("incomplete generation: {evaluated} evaluated candidates, {required} required")]
    IncompleteGeneration { evaluated: usize, required: usize },
    #[error("objective returned non-finite value {value} at {x:?}")]
    NonFiniteEvaluation { x: Vec<f64>, value: f64 },
    #[error("non-finite input {0:?}")]
    NonFiniteInput(Vec<f64>),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("insufficient points for fit: {got} given, {required} required")]
    InsufficientPoints { got: usize, required: usize },
    #[error("insufficient test points: {0} given, at least 2 required")]
    InsufficientTestPoints(usize),
    #[error("value {0} outside [0, 1]")]
    Domain(f64),
    #[error("degenerate trust box: training set has zero extent on axis {0}")]
    DegenerateBox(usize),
    #[error("local search budget {budget} is smaller than the {starts} start points")]
    InvalidBudget { budget: usize, starts: usize },
    #[error("speedup undefined: candidate mean evaluation count is zero")]
    UndefinedSpeedup,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown function `{name}`; valid functions: {valid}")]
    UnknownFunction { name: String, valid: String },
    #[error("unknown kernel `{0}`; valid kernels: cubic, tps, linear")]
    UnknownKernel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
