use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("page capacity must be at least 1")]
    ZeroPageCard,

    #[error("tuple of {0} payload bytes does not fit in a page")]
    TupleTooLarge(usize),

    #[error("page {0} out of range (table has {1} pages)")]
    PageOutOfRange(u64, u64),

    #[error("tuple ({0}, {1}) not found or already dead")]
    TupleNotFound(u64, u16),

    #[error("table is empty")]
    EmptyTable,

    #[error("histogram resolution {0} exceeds table cardinality {1}")]
    ResolutionTooLarge(u32, u64),

    #[error("histogram resolution must be at least 1")]
    ZeroResolution,

    #[error("range lower bound {0} exceeds upper bound {1}")]
    InvalidRange(i64, i64),

    #[error("predicate must contain at least one atom")]
    EmptyPredicate,

    #[error("cannot parse predicate: {0}")]
    PredicateParse(String),

    #[error("bucket {0} out of range 1..={1}")]
    BucketOutOfRange(u32, u32),

    #[error("bitmap length mismatch: {0} vs {1} bits")]
    BitmapLengthMismatch(u32, u32),

    #[error("malformed encoded bitmap: {0}")]
    MalformedBitmap(&'static str),

    #[error("density threshold {0} must lie in (0, 1]")]
    InvalidDensity(f64),

    #[error("invalid cost parameter: {0}")]
    InvalidCostParam(String),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("index covers {indexed} pages but table has {actual}; rebuild or apply maintenance")]
    StaleIndex { indexed: u64, actual: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
