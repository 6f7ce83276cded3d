use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical invariant (Hermitian symmetry, PSD-ness, ...) does not hold.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("training diverged at K'={subnetworks}, iteration {iteration}: loss = {loss}")]
    Diverged {
        subnetworks: usize,
        iteration: usize,
        loss: f64,
    },

    /// `line` is 1-based; 0 means the problem is not tied to one line.
    #[error("parse error{}: {message}", if *line > 0 { format!(" at line {line}") } else { String::new() })]
    Parse { line: usize, message: String },

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
