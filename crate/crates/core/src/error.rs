use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `grad_sq` is `|grad u|^2_sigma`; `at` is the node coordinate when known.
    #[error("spacelike violation: |grad u|^2 = {grad_sq} at {at:?}")]
    SpacelikeViolation { grad_sq: f64, at: Option<f64> },

    #[error("axis error: r = 0 needs the axis rule")]
    Axis,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("barrier construction failed after {doublings} doublings (r0 = {r0}, worst residual {residual})")]
    Construction {
        doublings: usize,
        r0: f64,
        residual: f64,
    },

    #[error("interpolated data not spacelike enough: slope {slope} > {bound} at r = {r}")]
    Interpolation { slope: f64, bound: f64, r: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
