use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("undefined metric for slice `{slice}`: {reason}")]
    UndefinedMetric { slice: String, reason: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training fault at epoch {epoch}, batch {batch}: {detail}")]
    TrainingFault {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("metric fault: {0}")]
    MetricFault(String),

    #[error("eval error: {0}")]
    Eval(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

/// Process exit classes used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Config,
    Data,
    Numeric,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        match self {
            ExitClass::Config => 2,
            ExitClass::Data => 3,
            ExitClass::Numeric => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }

    pub fn exit_class(&self) -> ExitClass {
        match self {
            Error::Config(_) => ExitClass::Config,
            Error::TrainingFault { .. } | Error::MetricFault(_) => ExitClass::Numeric,
            Error::Stage { source, .. } => source.exit_class(),
            _ => ExitClass::Data,
        }
    }
}
