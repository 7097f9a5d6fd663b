//! Zero-shot evaluation runs: prompt each sample, query a model adapter,
//! persist the raw reply, then parse and score it.

use thiserror::Error;

pub mod http;
pub mod replay;
pub mod run;

pub use http::{HttpAdapter, HttpConfig, PromptRole, RetryPolicy};
pub use replay::ReplayAdapter;
pub use run::{load_records, rescore, run_eval, RunConfig, RunRecord, RunSummary, SampleMetrics};

/// Default sample count for runs against paid APIs.
pub const PROPRIETARY_SAMPLE_COUNT: usize = 300;

/// One model request.
#[derive(Debug, Clone)]
pub struct Query<'a> {
    pub id: &'a str,
    pub prompt: &'a str,
    /// PNG file bytes as stored on disk.
    pub image_png: &'a [u8],
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, body: String, attempts: u32 },
    #[error("request failed after {attempts} attempt(s): {message}")]
    Network { message: String, attempts: u32 },
    #[error("no stored response for {0}")]
    MissingResponse(String),
    #[error("adapter misconfigured: {0}")]
    Config(String),
}

impl TransportError {
    pub fn attempts(&self) -> u32 {
        match self {
            TransportError::Status { attempts, .. } | TransportError::Network { attempts, .. } => *attempts,
            TransportError::MissingResponse(_) => 1,
            TransportError::Config(_) => 0,
        }
    }
}

/// A model endpoint that turns a prompt plus image into reply text.
pub trait ModelAdapter: Send + Sync {
    /// Short identity recorded in `run.json`.
    fn label(&self) -> String;
    fn query(&self, query: &Query<'_>) -> Result<Reply, TransportError>;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("{0}")]
    Incompatible(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}
