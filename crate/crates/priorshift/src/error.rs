use thiserror::Error;

/// Errors shared across distribution construction, shift synthesis,
/// estimation and diagnostics.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("grid shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("absolute continuity violated at {} cell(s), first: {:?}", .0.len(), .0.first())]
    AbsoluteContinuityViolation(Vec<(usize, usize)>),
    #[error("target prior mass {mass} on class {class} with zero source mass")]
    UnsupportedClass { class: usize, mass: f64 },
    #[error("target feature mass {mass} on feature {feature:?} with zero source mass")]
    UnsupportedFeature { feature: String, mass: f64 },
    #[error("target stratum mass {mass} on stratum {stratum} with zero source mass")]
    UnsupportedStratum { stratum: usize, mass: f64 },
    #[error("stratum {stratum} requests mass on class {class} absent from the source")]
    UnsupportedClassInStratum { stratum: usize, class: usize },
    #[error("factor product integrates to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("no convergence after {iterations} iterations, residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("equation system infeasible: {0}")]
    InfeasibleSystem(String),
    #[error("degenerate initialization: entry {index} is zero")]
    DegenerateInit { index: usize },
    #[error("target mass {mass} on feature {feature:?} with undefined source posterior")]
    UndefinedPosteriorMass { feature: String, mass: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("all reweighted posteriors vanish at feature {feature:?}")]
    ZeroDenominator { feature: String },
    #[error("stratum {stratum} confusion matrix is rank-deficient (rank {rank} < {needed})")]
    SingularStratum {
        stratum: usize,
        rank: usize,
        needed: usize,
    },
    #[error("stratum {stratum} system inconsistent: simplex projection moved the solution by {displacement}")]
    InconsistentSystem { stratum: usize, displacement: f64 },
    #[error("stratum {stratum} has zero source mass but positive weight demanded")]
    EmptyStratum { stratum: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable class name, used by experiment reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::AbsoluteContinuityViolation(_) => "AbsoluteContinuityViolation",
            Error::UnsupportedClass { .. } => "UnsupportedClass",
            Error::UnsupportedFeature { .. } => "UnsupportedFeature",
            Error::UnsupportedStratum { .. } => "UnsupportedStratum",
            Error::UnsupportedClassInStratum { .. } => "UnsupportedClassInStratum",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InfeasibleSystem(_) => "InfeasibleSystem",
            Error::DegenerateInit { .. } => "DegenerateInit",
            Error::UndefinedPosteriorMass { .. } => "UndefinedPosteriorMass",
            Error::EmptySample => "EmptySample",
            Error::ZeroDenominator { .. } => "ZeroDenominator",
            Error::SingularStratum { .. } => "SingularStratum",
            Error::InconsistentSystem { .. } => "InconsistentSystem",
            Error::EmptyStratum { .. } => "EmptyStratum",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}
