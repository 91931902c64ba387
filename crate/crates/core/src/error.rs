use thiserror::Error;

/// Errors raised by corpus handling, dataset generation, model training and
/// evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed session record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("entity `{id}` appears both as an item and as a page")]
    KindConflict { id: String },

    #[error("dense vector on `{id}` has length {got}, corpus declares {expected}")]
    DenseDimMismatch { id: String, got: usize, expected: usize },

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    BadInput { path: String, message: String },

    #[error("rated item `{id}` is missing from the metadata file")]
    UnknownRatedItem { id: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),

    #[error("list page `{id}` has an empty item list")]
    EmptyListPage { id: String },

    #[error("list page `{page}` references unknown item `{item}`")]
    UnknownListItem { page: String, item: String },

    #[error("interaction `{id}` has no attributes to map to a state")]
    NoAttributes { id: String },

    #[error("belief factor k must be non-negative, got {0}")]
    NegativeBelief(f64),

    #[error("CPID vocabulary requested but page `{id}` has no attributes")]
    PageWithoutAttrs { id: String },

    #[error("page-embedding strategy needs at least one source")]
    EmptyPeSources,

    #[error("dense-vector source requested but the corpus declares no dense dimension")]
    MissingDenseDim,

    #[error("session for user `{user}` is shorter than 2 interactions after truncation")]
    SessionTooShort { user: String },

    #[error("batch has no unmasked targets")]
    AllMasked,

    #[error("non-finite value in {where_}: {detail}")]
    NonFinite { where_: &'static str, detail: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("session for user `{user}` does not end with an item")]
    NoItemTarget { user: String },

    #[error("top-k query needs k >= 1")]
    ZeroK,

    #[error("item `{id}` has a zero-norm embedding row")]
    ZeroNormEmbedding { id: String },

    #[error("similarity matrices use different item orderings")]
    OrderingMismatch,

    #[error("{0}")]
    Msg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
