use thiserror::Error;

/// Errors surfaced by the library. Each variant maps to a stable kebab-case
/// code used in machine-readable CLI output.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("group is not closed: element {0} composed with element {1} is missing")]
    ClosureViolation(usize, usize),
    #[error("duplicate group elements at positions {0} and {1}")]
    DuplicateElement(usize, usize),
    #[error("group has no elements")]
    EmptyGroup,
    #[error("blocks do not form a partition: {0}")]
    BadBlocks(String),
    #[error("block group has {0} elements, above the enumeration limit {1}")]
    TooLarge(u128, u128),
    #[error("target column lies in the span of the nuisance columns")]
    DegenerateResidual,
    #[error("linear system has no nontrivial solution")]
    NoSolution,
    #[error("unknown column {0}")]
    BadColumn(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidPermutation(_) => "invalid-permutation",
            Error::ClosureViolation(..) => "closure-violation",
            Error::DuplicateElement(..) => "duplicate-element",
            Error::EmptyGroup => "empty-group",
            Error::BadBlocks(_) => "bad-blocks",
            Error::TooLarge(..) => "too-large",
            Error::DegenerateResidual => "x-in-span-z",
            Error::NoSolution => "no-solution",
            Error::BadColumn(_) => "bad-column",
            Error::Parse(_) => "parse-error",
            Error::Io(_) => "io-error",
        }
    }

    /// True for errors caused by malformed user data rather than a method failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::BadColumn(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidPermutation(_)
                | Error::BadBlocks(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
