use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request exceeding the configured memory or dimensionality budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Pointwise evaluation inside the core of an unmollified singular kernel.
    #[error("kernel singularity: {0}; mollify the kernel or increase the guard radius")]
    Singularity(String),

    #[error("numerical blow-up in replica {replica} at step {step}: {detail}")]
    BlowUp {
        replica: usize,
        step: u64,
        detail: String,
    },

    #[error("time step {dt} violates the CFL guard; use dt <= {suggested}")]
    StepSize { dt: f64, suggested: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
