use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,

    #[error("source sequence is empty")]
    EmptySource,

    #[error("summary has {len} tokens, fewer than the n-gram order {n}")]
    SummaryTooShort { len: usize, n: usize },

    #[error("document has {0} sentence(s); at least 2 are required")]
    TooFewSentences(usize),

    #[error("sentence index {index} out of range for {count} sentences")]
    SentenceIndex { index: usize, count: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {id} at position {position} is outside the vocabulary of {vocab}")]
    OutOfVocab { id: u32, position: usize, vocab: usize },

    #[error("sequence of length {len} exceeds the limit {max}")]
    TooLong { len: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
