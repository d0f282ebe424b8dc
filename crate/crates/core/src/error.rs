use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice: |det| = {det:e} is not above 1e-12")]
    DegenerateLattice { det: f64 },

    #[error("singular dilation matrix: |det| = {det:e}")]
    SingularMatrix { det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix {index} does not preserve lattice: |det| = {det}")]
    NotUnimodular { index: usize, det: i128 },

    #[error("group not finite under bound: closure exceeds {bound} elements")]
    GroupTooLarge { bound: usize },

    #[error("offset set not group-closed: offset {offset:?} maps to {image:?}")]
    OffsetsNotGroupClosed { offset: Vec<i64>, image: Vec<i64> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("band too small: {primitive} needs offset {offset:?}, which is not in the offset set")]
    BandTooSmall { primitive: String, offset: Vec<i64> },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite sample at channel {channel}, offset {offset}, cell {cell}")]
    NonFinite { channel: usize, offset: usize, cell: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("measure {requested} not grid-representable; nearest representable values are {below:?} and {above:?}")]
    MeasureNotRepresentable {
        requested: f64,
        below: Option<f64>,
        above: Option<f64>,
    },

    #[error("measure {requested} not reachable as a union of whole orbits; nearest reachable measures are {below:?} and {above:?}")]
    MeasureNotReachable {
        requested: f64,
        below: Option<f64>,
        above: Option<f64>,
    },

    #[error("mask is not invariant under group element {element}")]
    MaskNotInvariant { element: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown example id `{0}`")]
    UnknownExample(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
