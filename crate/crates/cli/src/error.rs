use std::path::Path;

use hyperforest::dataset::DatasetError;
use hyperforest::evaluation::EvalError;
use hyperforest::features::FeatureError;
use hyperforest::forest::ForestError;
use hyperforest::hyper_forest::HyperForestError;
use hyperforest::ingestion::IngestError;
use hyperforest::rfe::RfeError;
use hyperforest::splitter::SplitError;
use thiserror::Error;

use crate::model_file::ModelFileError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 success, 1 usage or config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Model(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn missing(path: &Path) -> Self {
        CliError::Data(format!("file not found: {}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::BadFractions(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::InvalidParams(_) => CliError::Config(e.to_string()),
            ForestError::EmptyNode => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HyperForestError> for CliError {
    fn from(e: HyperForestError) -> Self {
        match e {
            HyperForestError::Forest(f) => f.into(),
            HyperForestError::InconsistentSchema => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RfeError> for CliError {
    fn from(e: RfeError) -> Self {
        match e {
            RfeError::Split(s) => s.into(),
            RfeError::HyperForest(h) => h.into(),
            RfeError::Eval(v) => v.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Attach the file name to dataset errors.
pub fn dataset_error(path: &Path, e: DatasetError) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
