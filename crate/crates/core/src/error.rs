use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::sampler::PartialRun;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failures reported by a chat, embedding or NLI backend.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid prompt: prompt must be non-empty")]
    InvalidPrompt,
    #[error("invalid input at index {index}: {reason}")]
    InvalidInput { index: usize, reason: String },
    #[error("provider unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("no stub entry for {0:?}")]
    MissingFixture(String),
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid output spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid sample set: {0}")]
    InvalidSampleSet(String),
    #[error("log-probabilities required but missing for samples {sample_ids:?}")]
    LogprobsRequired { sample_ids: Vec<String> },
    #[error("answer extraction failed for samples {sample_ids:?}: {reason}")]
    InvalidExtraction {
        sample_ids: Vec<String>,
        reason: String,
    },
    #[error("invalid samples {sample_ids:?}: {reason}")]
    InvalidSample {
        sample_ids: Vec<String>,
        reason: String,
    },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("degenerate graph: row {row} of the similarity matrix sums to zero")]
    DegenerateGraph { row: usize },
    #[error("invalid similarity matrix: {0}")]
    InvalidMatrix(String),
    #[error("degenerate regressor: all uncertainty values are equal")]
    DegenerateRegressor,
    #[error("degenerate centroid: mean embedding has zero norm")]
    DegenerateCentroid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("plan infeasible: k = {k} exceeds the {m} available variants")]
    PlanInfeasible { k: usize, m: usize },
    #[error("invalid variants: {0}")]
    InvalidVariants(String),
    #[error("sample set is partial ({failed} failed cell(s)); accept it explicitly to score it")]
    PartialSampleSet { failed: usize },
    #[error("{} of {} plan cell(s) failed", .0.failures.len(), .0.planned)]
    PartialResult(Box<PartialRun>),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}
