//! Review service: serves the ranked article queue to fact-checkers, records
//! their verdicts in an append-only log and retrains on the corrected labels.
//!
//! Reads go through an immutable [`Snapshot`] behind an `RwLock<Arc<_>>`;
//! verdict writes and snapshot swaps are serialized by one writer lock, so a
//! reader never sees a half-updated ranking.

mod api;
mod log;
mod state;
mod verdict;

use axum::http::StatusCode;
use thiserror::Error;

use triage_core::eval::EvalError;
use triage_core::pipeline::PipelineError;

pub use api::{router, serve};
pub use log::{read_log, FeedbackLog};
pub use state::{
    default_trainer, ArticleDetail, ArticleSummary, MetricsSummary, MetricsView, PostDetail, QueuePage, QueueState,
    RetrainOutcome, RetrainRequest, Service, ServiceConfig, Snapshot, StatusFilter, SubmitAck, Trainer,
    DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE,
};
pub use verdict::{apply_feedback, validate_verdict, ArticleStatus, Verdict, VerdictRequest};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no article with url {0}")]
    UnknownArticle(String),
    #[error("article {0} already has a verdict")]
    DuplicateVerdict(String),
    #[error("{0}")]
    InvalidVerdict(String),
    #[error("{0}")]
    InconsistentLabels(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error("feedback log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Training(#[from] PipelineError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownArticle(_) => "unknown_article",
            ServiceError::DuplicateVerdict(_) => "duplicate_verdict",
            ServiceError::InvalidVerdict(_) => "invalid_verdict",
            ServiceError::InconsistentLabels(_) => "inconsistent_labels",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::CorruptLog { .. } => "corrupt_log",
            ServiceError::Training(e) => e.code(),
            ServiceError::Evaluation(e) => e.code(),
            ServiceError::Io(_) => "io",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownArticle(_) => StatusCode::NOT_FOUND,
            ServiceError::DuplicateVerdict(_) => StatusCode::CONFLICT,
            ServiceError::InvalidVerdict(_) | ServiceError::InconsistentLabels(_) | ServiceError::InvalidRequest(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}
