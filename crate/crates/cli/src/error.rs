use serde::Serialize;
use stnmmd_sim::data::DataError;
use stnmmd_sim::harness::HarnessError;

/// Error reported in the JSON output; `code` is stable across releases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    /// Configuration field at fault, as a path such as `n_total[1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            file: None,
            line: None,
            field: None,
        }
    }

    pub fn io(file: &str, message: String) -> Self {
        Self {
            file: Some(file.into()),
            ..Self::new("io_error", message)
        }
    }

    pub fn parse(file: &str, line: Option<u64>, message: String) -> Self {
        let message = match line {
            Some(l) => format!("{file}, line {l}: {message}"),
            None => format!("{file}: {message}"),
        };
        Self {
            file: Some(file.into()),
            line,
            ..Self::new("parse_error", message)
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        let field = field.into();
        let message = format!("{field}: {}", message.into());
        Self {
            field: Some(field),
            ..Self::new("config_error", message)
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl From<stnmmd::Error> for CliError {
    fn from(e: stnmmd::Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match &e {
            DataError::BadMagic { .. } => "bad_magic",
            DataError::TruncatedFile { .. } => "truncated_file",
            DataError::CountMismatch { .. } => "count_mismatch",
            DataError::BadShape { .. } => "bad_shape",
            DataError::EmptyMnistSubset(_) => "empty_mnist_subset",
            DataError::MnistUnavailable => "mnist_unavailable",
            DataError::InvalidSpec(_) => "invalid_distribution",
            DataError::Io { .. } => "io_error",
        };
        Self::new(code, e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config { field, message } => Self::config(field, message),
            HarnessError::Data(d) => d.into(),
            HarnessError::ThreadPool(m) => Self::new("thread_pool", m),
        }
    }
}
