use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("psi table does not decay on [-{half_width}, {half_width}]: end ratio {ratio:.3e} exceeds {limit:.0e}")]
    GridResolution { half_width: f64, ratio: f64, limit: f64 },

    #[error("gradient has zero or non-finite norm")]
    DegenerateGradient,

    #[error("covariance factor has no nonzero column")]
    ZeroCovariance,

    #[error("box coordinate {coord} has zero or negative width")]
    EmptyBox { coord: usize },

    #[error("dataset carries no gradient data")]
    MissingGradients,

    #[error("all gradients are zero")]
    AllZeroGradients,

    #[error("dataset carries no Hessian data")]
    MissingHessians,

    #[error("all mixture traces are zero")]
    ZeroTrace,

    #[error("density values requested but dataset has no rho")]
    MissingRho,

    #[error("rejection sampler collapsed: acceptance rate {rate:.3e} over {proposals} proposals")]
    AcceptanceCollapse { rate: f64, proposals: u64 },

    #[error("smoothing width delta must be positive for this operation")]
    DeltaZero,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Cholesky factorization failed (alpha = {alpha:e})")]
    Factorization { alpha: f64 },

    #[error("model gradient undefined for Heaviside activation without smoothing")]
    NonsmoothModel,

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("monte carlo error {stderr:.3e} too large for tolerance {tolerance:.3e}")]
    InsufficientSamples { stderr: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag, used in the `status` column of result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::GridResolution { .. } => "grid-resolution",
            Error::DegenerateGradient => "degenerate-gradient",
            Error::ZeroCovariance => "zero-covariance",
            Error::EmptyBox { .. } => "empty-box",
            Error::MissingGradients => "missing-gradients",
            Error::AllZeroGradients => "all-zero-gradients",
            Error::MissingHessians => "missing-hessians",
            Error::ZeroTrace => "zero-trace",
            Error::MissingRho => "missing-rho",
            Error::AcceptanceCollapse { .. } => "acceptance-collapse",
            Error::DeltaZero => "delta-zero",
            Error::NonFinite(_) => "non-finite",
            Error::Factorization { .. } => "factorization",
            Error::NonsmoothModel => "nonsmooth-model",
            Error::UnknownBenchmark(_) => "unknown-benchmark",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
