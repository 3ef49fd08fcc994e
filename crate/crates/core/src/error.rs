use core::fmt;

use crate::lp::LpError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Box bounds are not strictly ordered on some axis, or have mismatched lengths.
    InvalidDomain { axis: usize },
    /// A point or parameter has the wrong number of coordinates.
    DimensionMismatch { expected: usize, found: usize },
    /// A weight vector's length does not match the number of atoms.
    LengthMismatch { expected: usize, found: usize },
    EmptyMeasure,
    /// An atom (0-based index) lies outside the box.
    PointOutsideDomain { index: usize },
    EmptyBatch,
    InvalidParameter(&'static str),
    /// The truncated Gaussian keeps less than 1e-3 of its mass inside the box.
    DegenerateTruncation { acceptance: f64 },
    /// Rasterization is only defined on two-dimensional domains.
    NotTwoDimensional { dim: usize },
    Lp(LpError),
    /// The cut polytope stayed empty after the noise relaxation.
    InfeasiblePolytope { cuts: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDomain { axis } => {
                write!(f, "invalid box domain: need lo < hi on axis {axis}")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "weight vector has length {found}, expected {expected}")
            }
            Error::EmptyMeasure => f.write_str("empirical measure has no atoms"),
            Error::PointOutsideDomain { index } => {
                write!(f, "point {index} lies outside the domain")
            }
            Error::EmptyBatch => f.write_str("sample batch is empty"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::DegenerateTruncation { acceptance } => write!(
                f,
                "truncated Gaussian keeps only {acceptance:.3e} of its mass in the box"
            ),
            Error::NotTwoDimensional { dim } => {
                write!(f, "rasterization needs a 2-D domain, got dimension {dim}")
            }
            Error::Lp(e) => write!(f, "linear program: {e}"),
            Error::InfeasiblePolytope { cuts } => {
                write!(f, "cut polytope is empty after relaxation ({cuts} cuts)")
            }
        }
    }
}

impl core::error::Error for Error {}

impl From<LpError> for Error {
    fn from(e: LpError) -> Self {
        Error::Lp(e)
    }
}
