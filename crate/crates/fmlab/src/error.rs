use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("stage `{stage}` failed: {message}")]
    Numeric { stage: String, message: String },

    #[error("stage `{stage}` violated an invariant: {message}")]
    Invariant { stage: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// Process exit status: 2 validation, 3 numeric failure, 4 invariant
    /// violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Numeric { .. } => 3,
            HarnessError::Invariant { .. } => 4,
            HarnessError::Io { .. } | HarnessError::Other(_) => 1,
        }
    }

    pub fn from_core(stage: &str, e: fmlab_core::Error) -> Self {
        if e.is_invariant() {
            HarnessError::Invariant {
                stage: stage.into(),
                message: e.to_string(),
            }
        } else if e.is_validation() {
            HarnessError::Validation(vec![format!("{stage}: {e}")])
        } else {
            HarnessError::Numeric {
                stage: stage.into(),
                message: e.to_string(),
            }
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stage the error occurred in, if it is tied to one.
    pub fn stage(&self) -> Option<&str> {
        match self {
            HarnessError::Numeric { stage, .. } | HarnessError::Invariant { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type HResult<T> = std::result::Result<T, HarnessError>;
