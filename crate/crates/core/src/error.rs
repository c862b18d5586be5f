use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate {kind} id `{id}` (line {line})")]
    DuplicateId { kind: &'static str, id: String, line: usize },

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty corpus for setting `{0}`")]
    EmptyCorpus(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error("no trainable samples: {0}")]
    NoTrainableSamples(String),

    #[error("no relevant paper appears in the ranking")]
    NoRelevantInCorpus,

    #[error("no includable proposals for evaluation")]
    NothingToEvaluate,

    #[error("triplet group for sample `{sample}` is missing kind {kind}")]
    IncompleteGroup { sample: String, kind: &'static str },

    #[error("judgment for `{0}` lies outside the re-ranked head")]
    JudgmentOutsideHead(String),

    #[error("embedding failed for `{owner}`: {reason}")]
    Embedding { owner: String, reason: String },

    #[error("judge backend unreachable for {failed} of {total} calls")]
    BackendUnreachable { failed: usize, total: usize },
}
