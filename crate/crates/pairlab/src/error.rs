use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {source}")]
    DatasetLine { line: usize, source: Box<Error> },
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("bad index: {0}")]
    BadIndex(String),
    #[error("bad sentiment tag {0:?} (expected POS, NEU or NEG)")]
    BadTag(String),
    #[error("invalid sentence: {0}")]
    InvalidSentence(String),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("no candidate subsequence: the sentence has no tokens")]
    NoCandidate,
    #[error("bad span ({start}, {end}) for sentence length {len}")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("empty description text")]
    EmptyDescription,
    #[error("sentence has no gold triplets")]
    NoTriplets,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("numerical error: {0}")]
    NumericalError(String),
    #[error("index {index} out of range for {len} logits")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("empty dataset: no sentence with gold triplets")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("prediction/gold alignment error: {0}")]
    AlignmentError(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}
