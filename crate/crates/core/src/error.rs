use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("degenerate SDMA set on subchannel {subchannel} (condition {condition:.3e})")]
    DegenerateSet { subchannel: usize, condition: f64 },

    #[error("no allocatable subchannels")]
    NoAllocatableSubchannels,

    #[error("power dual must be positive, got {0}")]
    InvalidTheta(f64),

    #[error("{what} index {index} out of range (< {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("invalid sweep: {0}")]
    Sweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
