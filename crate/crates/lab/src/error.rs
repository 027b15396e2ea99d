use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] ganmpc::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("demonstrator underperforms: mean per-step reward {mean:.4} below threshold {threshold}")]
    ExpertUnderperforms { mean: f64, threshold: f64 },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
