use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("split on feature {feature} but the model has {n_features} features")]
    FeatureIndexOutOfRange { feature: usize, n_features: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input value at feature {0}")]
    NonFiniteInput(usize),

    #[error("output configurations differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("no correctly classified reference examples for class {0}")]
    EmptyClassPartition(u8),

    #[error("malformed reference set file: {0}")]
    MalformedReferenceSet(String),

    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("enumeration exceeded the cap of {0} output configurations")]
    EnumerationCapExceeded(u64),

    #[error("no adversarial example exists within the search region")]
    NoAdversarialExists,

    #[error("empty list")]
    EmptyList,

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("configuration limit: {0}")]
    ConfigLimit(String),

    #[error("too few examples: {0}")]
    TooFewExamples(String),

    #[error("only {available} correctly classified examples, {requested} requested")]
    InsufficientCorrect { available: usize, requested: usize },

    #[error("scores contain a single class")]
    SingleClass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(index: usize, err: Error) -> Error {
        Error::AtIndex {
            index,
            source: Box::new(err),
        }
    }
}
