use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model index {index} out of range for {num_models} models")]
    IndexOutOfRange { index: usize, num_models: usize },

    #[error("a comparison needs two distinct models, got {0} twice")]
    SameModel(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameters violate the sum-to-zero normalization (residual {residual:e})")]
    NotNormalized { residual: f64 },

    #[error("comparison graph is disconnected ({} components)", components.len())]
    DisconnectedGraph { components: Vec<Vec<usize>> },

    #[error("design is rank deficient: rank {rank}, need {required}")]
    RankDeficientDesign { rank: usize, required: usize },

    #[error("negative log-likelihood is not finite")]
    NonFiniteLikelihood,

    #[error("base fit did not converge after {iterations} iterations (projected gradient {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailedReplicates { failed: usize, total: usize },

    #[error("negative variance {0:e} for a utility difference")]
    NegativeVariance(f64),

    #[error("pair ({0}, {1}) has zero standard error")]
    DegeneratePair(usize, usize),

    #[error("covariance factorization failed")]
    FactorizationFailure,

    #[error("grid dimension {dim} exceeds the cap of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown winner tag {tag:?}")]
    UnknownWinnerTag { line: usize, tag: String },

    #[error("line {line}: missing covariate {field:?}")]
    MissingCovariate { field: String, line: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::SameModel(_) => "same_model",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::NotNormalized { .. } => "not_normalized",
            Error::DisconnectedGraph { .. } => "disconnected_graph",
            Error::RankDeficientDesign { .. } => "rank_deficient_design",
            Error::NonFiniteLikelihood => "non_finite_likelihood",
            Error::NotConverged { .. } => "not_converged",
            Error::TooManyFailedReplicates { .. } => "too_many_failed_replicates",
            Error::NegativeVariance(_) => "negative_variance",
            Error::DegeneratePair(..) => "degenerate_pair",
            Error::FactorizationFailure => "factorization_failure",
            Error::DimensionTooLarge { .. } => "dimension_too_large",
            Error::Parse { .. } => "parse_error",
            Error::UnknownWinnerTag { .. } => "unknown_winner_tag",
            Error::MissingCovariate { .. } => "missing_covariate",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}
