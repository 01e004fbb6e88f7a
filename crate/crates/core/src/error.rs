use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no token survives the vocabulary filters")]
    EmptyVocabulary,
    #[error("vocabulary needs at least 2 tokens, got {0}")]
    VocabularyTooSmall(usize),
    #[error("duplicate token in vocabulary: {0}")]
    DuplicateToken(String),
    #[error("label count {labels} does not match document count {docs}")]
    LabelMismatch { docs: usize, labels: usize },
    #[error("invalid label on line {line}: {value:?}")]
    BadLabel { line: usize, value: String },
    #[error("word id {id} out of range for vocabulary of size {size}")]
    WordOutOfRange { id: usize, size: usize },
    #[error("class id {id} out of range for {classes} classes")]
    ClassOutOfRange { id: usize, classes: usize },
    #[error("corpus needs at least {needed} documents, got {got}")]
    TooFewDocuments { needed: usize, got: usize },
    #[error("every TF-IDF row has zero weight")]
    AllRowsDropped,
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("non-finite gradient passed to the optimizer")]
    NonFiniteGradient,
    #[error("non-finite {term} at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, term: &'static str },
    #[error("dirichlet sample degenerated after {0} retries")]
    DegenerateSample(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("npmi needs two distinct words, got {0} twice")]
    IdenticalWords(usize),
    #[error("reference corpus is empty")]
    EmptyReference,
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
