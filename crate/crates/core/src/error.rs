use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("table has no data rows")]
    NoDataRows,
    #[error("split part `{0}` is empty")]
    EmptySplitPart(&'static str),
    #[error("no embedding for table `{0}`")]
    MissingEmbedding(String),
    #[error("split references unknown table `{0}`")]
    DanglingTable(String),
    #[error("unknown category label `{0}`")]
    UnknownLabel(String),
    #[error("vector is not one-hot")]
    NotOneHot,
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("no real row matches the sampled condition")]
    NoMatchingRow,
    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("incompatible model and table: {0}")]
    Incompatible(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("sequence of {len} tokens exceeds context length {context}")]
    ContextOverflow { len: usize, context: usize },
}
