use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Configuration-side problems (`Domain`, `InvalidParameter`, `UnknownName`,
/// `InadmissibleKernel`) are distinguished from numerical failures
/// (`NotConverged`) so front ends can map them to different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: argument outside the supported domain ({msg})")]
    Domain { op: &'static str, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("inadmissible weight kernel: {0}")]
    InadmissibleKernel(String),

    #[error("integral did not converge: {context} (value {value:e}, error estimate {error:e}, {subdivisions} subdivisions)")]
    NotConverged {
        context: String,
        value: f64,
        error: f64,
        subdivisions: usize,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
