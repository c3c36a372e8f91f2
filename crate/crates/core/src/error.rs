use std::path::PathBuf;

/// Unified error type for the whole crate.
///
/// The variants mirror the failure classes the library distinguishes:
/// structural mismatches (`Shape`), invalid argument values (`Domain`),
/// mutually inconsistent records (`Consistency`), floating-point blow-ups
/// (`Numeric`, which names the parameter block that went non-finite),
/// diverging optimization (`Training`), degenerate closed-form fits (`Fit`),
/// hyperparameter-search failures (`Search`), and file-level problems
/// (`Io`/`Parse`, which always carry the offending path).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    Domain(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("non-finite value in {block}: {detail}")]
    Numeric { block: String, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    pub fn numeric(block: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            block: block.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
