use std::path::Path;

use pgnn_core::Error as CoreError;
use thiserror::Error;

use crate::config::ExperimentKind;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{kind} run, seed {seed}: {source}")]
    Run {
        kind: ExperimentKind,
        seed: u64,
        #[source]
        source: CoreError,
    },

    #[error("data error: {0}")]
    Data(#[from] CoreError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {message}")]
    Csv { path: String, message: String },

    #[error("aggregation: {0}")]
    Aggregate(String),
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Parse { .. } | CoreError::Io { .. } => EXIT_DATA,
        CoreError::Precondition(_) | CoreError::Shape { .. } | CoreError::NotApplicable(_) => EXIT_CONFIG,
        CoreError::Degenerate(_)
        | CoreError::Numerical { .. }
        | CoreError::Undefined(_)
        | CoreError::Divergence { .. }
        | CoreError::DegradedRank { .. } => EXIT_NUMERICAL,
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => EXIT_CONFIG,
            HarnessError::Run { source, .. } | HarnessError::Data(source) => core_exit_code(source),
            HarnessError::Io { .. } | HarnessError::Csv { .. } => EXIT_DATA,
            HarnessError::Aggregate(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn csv(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Attaches run context to core errors.
pub(crate) trait RunContext<T> {
    fn ctx(self, kind: ExperimentKind, seed: u64) -> Result<T, HarnessError>;
}

impl<T> RunContext<T> for pgnn_core::Result<T> {
    fn ctx(self, kind: ExperimentKind, seed: u64) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Run { kind, seed, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        let cfg = HarnessError::Config {
            path: "x".into(),
            message: "y".into(),
        };
        assert_eq!(cfg.exit_code(), EXIT_CONFIG);
        let div = HarnessError::Run {
            kind: ExperimentKind::Alignment,
            seed: 1,
            source: CoreError::Divergence {
                step: 3,
                context: "nan".into(),
            },
        };
        assert_eq!(div.exit_code(), EXIT_NUMERICAL);
        assert!(div.to_string().contains("alignment run, seed 1"));
        let parse = HarnessError::Data(CoreError::Parse {
            offset: 0,
            message: "magic".into(),
        });
        assert_eq!(parse.exit_code(), EXIT_DATA);
    }
}
