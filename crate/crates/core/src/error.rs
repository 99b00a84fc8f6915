use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map one-to-one onto the CLI exit-code classes: configuration
/// problems, domain or numerical failures, and refusal to certify when the
/// control condition does not hold.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),

    #[error("CFL violation: displacement of {courant} cells per step exceeds 1 ({axis})")]
    Cfl { axis: &'static str, courant: f64 },

    #[error("jump-rate majorant violated: sigma({x:?}) = {value} > {sup_norm}")]
    MajorantViolation { x: Vec<f64>, value: f64, sup_norm: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("control condition not satisfied: kappa_hat = {kappa_hat:e} at x = {x:?}, v = {v:?} (threshold {threshold:e})")]
    GccNotSatisfied {
        kappa_hat: f64,
        threshold: f64,
        x: Vec<f64>,
        v: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
