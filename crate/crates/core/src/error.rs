use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("{what} is not Hermitian (max |M - M^dagger| = {defect:e})")]
    NotHermitian { what: String, defect: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "integration failed at t = {t}: trace drift {trace_drift:e}, minimum eigenvalue {min_eigenvalue:e}; \
         retry with a smaller step"
    )]
    IntegrationFailure {
        t: f64,
        trace_drift: f64,
        min_eigenvalue: f64,
    },

    #[error("imaginary residue {residue:e} in {what} exceeds tolerance")]
    ImaginaryResidue { what: &'static str, residue: f64 },

    #[error("Fock truncation {given} keeps only 1 - {deficit:e} of the norm; use n_trunc >= {required}")]
    InsufficientTruncation {
        given: usize,
        required: usize,
        deficit: f64,
    },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("inverse temperature mismatch: result prepared at beta = {prepared}, requested beta = {requested}")]
    BetaMismatch { prepared: f64, requested: f64 },

    #[error("deviation {deviation:e} at nbar = {nbar} is below the numerical floor; the logarithm is undefined")]
    NumericalFloor { nbar: f64, deviation: f64 },

    #[error("run did not reach a stationary state before t_max = {t_max} (largest final power {power:e})")]
    NotConverged { t_max: f64, power: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}
