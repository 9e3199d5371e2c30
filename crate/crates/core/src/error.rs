use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("patch {index} has a zero-norm feature vector")]
    ZeroVector { index: usize },
    #[error("grid is not L2-normalized (patch {index})")]
    UnnormalizedGrid { index: usize },
    #[error("mask value {value} at pixel {index} is not binary")]
    NonBinaryMask { index: usize, value: u8 },
    #[error("mask is empty")]
    EmptyMask,
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("patch index {index} out of range for {len} patches")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("patch index set is not strictly increasing")]
    UnsortedIndices,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error("duplicate reference image id {0:?}")]
    DuplicateImage(String),
    #[error("no held-out target for image {0:?}")]
    MissingTarget(String),
    #[error("score set is empty")]
    EmptyScoreSet,
    #[error("class has a single reference image; use the within-image fallback")]
    SingleReference,
    #[error("fallback needs exactly one reference image, found {0}")]
    NotSingleReference(usize),
    #[error("within-image scoring needs at least 2 foreground vectors, found {0}")]
    TooFewVectors(usize),
    #[error("bank is empty")]
    EmptyBank,
    #[error("component is empty")]
    EmptyComponent,
    #[error("class name is empty")]
    EmptyName,
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f32),
    #[error("invalid payload: {0}")]
    InvalidPayload(&'static str),
}
