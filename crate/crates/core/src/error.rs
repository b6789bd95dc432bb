use thiserror::Error;

/// Errors raised by mesh construction, cut geometry, assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("degenerate triangle (area {0:e})")]
    DegenerateTriangle(f64),

    #[error("degenerate segment")]
    DegenerateSegment,

    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),

    #[error("overlapping mesh is not strictly inside the background domain: {0}")]
    NotInside(String),

    #[error("boundary facet {facet} of the overlapping mesh could not be located in the background mesh")]
    SegmentNotLocated { facet: usize },

    #[error("point ({x}, {y}) is outside cell {cell}")]
    PointOutsideCell { cell: usize, x: f64, y: f64 },

    #[error("background cell {0} is not in the active background mesh")]
    InactiveCell(usize),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("found {found} zero eigenvalues, expected at most {expected}")]
    UnexpectedNullspace { found: usize, expected: usize },

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("norm matrix is not positive definite on the reduced space")]
    NotPositiveDefinite,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
