//! Crate-wide error type with exit-code classification.

use std::fmt;
use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Errors are classified for the process exit code: configuration and input
/// validation problems map to exit code 1, runtime failures (I/O, numerics)
/// map to exit code 2.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration or precondition violation.
    Invalid(String),
    /// Malformed input file content, with 1-based line number.
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    /// I/O failure wrapping the OS error.
    Io {
        context: String,
        source: std::io::Error,
    },
    /// Numerical failure at runtime, e.g. a non-finite loss.
    Numeric(String),
}

impl Error {
    /// Process exit code for this error: 1 for validation, 2 for runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Malformed { .. } => 1,
            Error::Io { .. } | Error::Numeric(_) => 2,
        }
    }

    /// Convenience constructor for validation errors.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Convenience constructor for I/O errors with context.
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Malformed {
                path,
                line,
                message,
            } => write!(f, "{}:{line}: {message}", path.display()),
            Error::Io { context, source } => write!(f, "{context}: {source}"),
            Error::Numeric(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_distinguish_validation_from_runtime() {
        assert_eq!(Error::invalid("bad fraction").exit_code(), 1);
        let malformed = Error::Malformed {
            path: PathBuf::from("x.csv"),
            line: 3,
            message: "oops".into(),
        };
        assert_eq!(malformed.exit_code(), 1);
        let io = Error::io("open", std::io::Error::new(std::io::ErrorKind::Other, "x"));
        assert_eq!(io.exit_code(), 2);
        assert_eq!(Error::Numeric("nan".into()).exit_code(), 2);
    }

    #[test]
    fn display_includes_line_numbers() {
        let e = Error::Malformed {
            path: PathBuf::from("data.csv"),
            line: 17,
            message: "duplicate edge".into(),
        };
        assert_eq!(e.to_string(), "data.csv:17: duplicate edge");
    }
}
