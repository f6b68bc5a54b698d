use std::io;
use std::path::Path;

use gvtcnn_core::Error;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Parameter(_) | Error::VariantMismatch { .. } => EXIT_USAGE,
                Error::Inference { .. } | Error::Divergence { .. } | Error::NonFiniteGradient { .. } => EXIT_NUMERIC,
                Error::Shape { .. }
                | Error::Input(_)
                | Error::Dataset(_)
                | Error::Format { .. }
                | Error::Simulation(_)
                | Error::Io(_) => EXIT_DATA,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_classes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(Error::Config("x".into())).exit_code(), 2);
        let mismatch = Error::VariantMismatch {
            expected: "H".into(),
            found: "Q".into(),
        };
        assert_eq!(CliError::from(mismatch).exit_code(), 2);
        assert_eq!(CliError::from(Error::Format { offset: 3, message: "bad".into() }).exit_code(), 3);
        assert_eq!(CliError::from(Error::Dataset("x".into())).exit_code(), 3);
        assert_eq!(CliError::io(Path::new("p"), io::ErrorKind::NotFound.into()).exit_code(), 3);
        let div = Error::Divergence {
            iteration: 1,
            detail: "nan".into(),
        };
        assert_eq!(CliError::from(div).exit_code(), 4);
        assert_eq!(CliError::from(Error::Inference { layer: "layer1".into() }).exit_code(), 4);
    }
}
