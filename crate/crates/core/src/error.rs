use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("svd failed to converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical kernels rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::RankDeficient { .. } | Error::NonFinite(_)
        )
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Dimension(_) | Error::Domain(_) => 2,
            e if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Domain("x".into()).exit_code(), 2);
        assert_eq!(Error::NoConvergence { sweeps: 100 }.exit_code(), 3);
        assert_eq!(Error::RankDeficient { condition: 1e13 }.exit_code(), 3);
        assert_eq!(Error::NonFinite("svd").exit_code(), 3);
        assert_eq!(Error::Io(std::io::Error::other("disk")).exit_code(), 1);
    }
}
