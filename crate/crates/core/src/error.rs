use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fock dimension {dim} exceeds cap {cap} (N = {n_atoms}, M = {n_modes})")]
    CapacityExceeded {
        dim: usize,
        cap: usize,
        n_atoms: usize,
        n_modes: usize,
    },

    #[error("quadrature under-resolved: trace deviation {deviation:e} exceeds {tolerance:e}")]
    QuadratureUnderResolved { deviation: f64, tolerance: f64 },

    #[error("kernel quadrature under-resolved: {0}")]
    KernelUnderResolved(String),

    #[error("alpha tail unresolved: |D| = {residual:e} at |alpha| = {alpha}")]
    AlphaTailUnresolved { residual: f64, alpha: f64 },

    #[error("alpha Fourier transform of a z-independent field is a delta distribution")]
    DeltaSpectrum,

    #[error("population {weight:e} in the top retained mode exceeds {tolerance:e}")]
    TruncationLeakage { weight: f64, tolerance: f64 },

    #[error("feedback composition depth {0} exceeds the limit of {max}", max = crate::corrdyn::MAX_FEEDBACK_DEPTH)]
    DepthExceeded(usize),

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("{check}: observed {observed:e} exceeds tolerance {tolerance:e}")]
    ToleranceFailure {
        check: String,
        observed: f64,
        tolerance: f64,
    },

    #[error("row N = {n_atoms}, sigma/dp0 = {sigma_over_dp0}: {source}")]
    Row {
        n_atoms: usize,
        sigma_over_dp0: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 4 when the Fock-space
    /// cap is hit, 3 for every numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::CapacityExceeded { .. } => 4,
            Error::Row { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn in_row(self, n_atoms: usize, sigma_over_dp0: f64) -> Error {
        Error::Row { n_atoms, sigma_over_dp0, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
