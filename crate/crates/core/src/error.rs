use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input or configuration outside the documented range.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A combinatorial or term-count budget would be exceeded.
    #[error("{what}: requested {requested} exceeds limit {limit}")]
    Cap {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn check_cap(what: &'static str, requested: u128, limit: u128) -> Result<()> {
        if requested > limit {
            Err(Error::Cap {
                what,
                requested,
                limit,
            })
        } else {
            Ok(())
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
