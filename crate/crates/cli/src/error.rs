//! CLI error classification: usage errors exit 1, data errors exit 2.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! data_error_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error_from!(
    std::io::Error,
    serde_json::Error,
    policyscope_core::ingest::IngestError,
    policyscope_core::labeling::LabelingError,
    policyscope_core::codebook::CodebookError,
    policyscope_core::agreement::AgreementError,
    policyscope_core::evaluation::EvalError,
    policyscope_core::textfeat::TextFeatError,
    policyscope_core::model::ModelError,
    policyscope_core::attention::AttentionError,
);
