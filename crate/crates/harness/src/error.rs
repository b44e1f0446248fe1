use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid spec {}: {}", path.display(), problems.join("; "))]
    Spec { path: PathBuf, problems: Vec<String> },

    #[error("invalid spec: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("dataset not found; expected {}. Run scripts/fetch_mnist.sh or set LRD_DATA_DIR", format_paths(.expected))]
    MissingData { expected: Vec<PathBuf> },

    #[error(transparent)]
    Core(#[from] lrdrop::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

fn format_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for unusable input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Spec { .. } | Self::Invalid(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
