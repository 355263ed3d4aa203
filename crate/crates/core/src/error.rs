use crate::moments::EigenEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid radial grid: {0}")]
    InvalidGrid(String),
    #[error("invalid samples: {0}")]
    InvalidSamples(String),
    #[error("query {r} outside the sampled domain [0, {end}]")]
    OutOfDomain { r: f64, end: f64 },
    #[error("samples are not strictly increasing (first violation at index {0})")]
    NotMonotone(usize),
    #[error("target {y} outside the sampled range [{lo}, {hi}]")]
    OutOfRange { y: f64, lo: f64, hi: f64 },
    #[error("invalid model space: {0}")]
    InvalidSpace(String),
    #[error("invalid warping function: {0}")]
    InvalidWarping(String),
    #[error("normalization constant at iteration {k} is {value}")]
    NonFiniteIteration { k: usize, value: f64 },
    #[error("monotone quotient property violated at iteration {k}: {detail}")]
    MonotonicityViolated { k: usize, detail: String },
    #[error("moment index {k} outside 1..={k_max}")]
    IndexOutOfRange { k: usize, k_max: usize },
    #[error("sandwich not converged after {} iterations: [{}, {}]", .0.iterations, .0.lower, .0.upper)]
    NotConverged(Box<EigenEstimate>),
    #[error("hierarchy depth {k_max} is below the required {required}")]
    InsufficientDepth { k_max: usize, required: usize },
    #[error("log-ratio variable left [-700, 700] at r = {r}")]
    OdeBlowup { r: f64 },
    #[error("bounding functions are not differentiable at r = {r}")]
    NonSmoothBounds { r: f64 },
    #[error("invalid bounding functions: {0}")]
    InvalidBounds(String),
    #[error("curvature bound must be non-positive, got {0}")]
    PositiveCurvature(f64),
    #[error("hypothesis not satisfied: {0}")]
    InfeasibleHypothesis(String),
    #[error("model spaces are not comparable: {0}")]
    NotComparable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("descriptor error: {0}")]
    Descriptor(#[from] serde_json::Error),
}

impl Error {
    /// Failures caused by an unmet geometric hypothesis rather than by numerics.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleHypothesis(_) | Error::PositiveCurvature(_) | Error::NotComparable(_)
        )
    }
}
