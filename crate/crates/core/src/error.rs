use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// `τ` outside `[0, π/2]`.
    TauOutOfRange {
        tau: f64,
    },
    /// An eigenvalue outside the admissibility cone of the operator branch.
    Inadmissible {
        index: usize,
        lambda: f64,
    },
    /// A grid point whose Hessian left the admissibility cone.
    ConeExit {
        point: usize,
        lambda: f64,
        time: f64,
    },
    /// A grid point of a stationary problem whose Hessian is outside the cone.
    InadmissibleAt {
        point: usize,
        lambda: f64,
    },
    NonFinite {
        point: usize,
        value: f64,
    },
    GridTooSmall {
        points_per_axis: usize,
        needed: usize,
    },
    UnsupportedDimension {
        dim: usize,
    },
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// A point needed for interpolation lies outside the source box.
    OutOfBox {
        coordinate: f64,
        half_width: f64,
    },
    SnapshotMissing {
        time: f64,
    },
    InsufficientSamples {
        needed: usize,
        found: usize,
    },
    NonPositiveSample {
        index: usize,
        value: f64,
    },
    /// `λ = −a − b` for the ratio form of the arctan branch.
    Pole {
        lambda: f64,
    },
    InvalidArgument(String),
    /// Condition A is a homogeneity property, not a Hessian cone.
    ConditionNotACone,
    LinearSolveFailed {
        iterations: usize,
        reduction: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TauOutOfRange { tau } => write!(f, "tau = {tau} is outside [0, pi/2]"),
            Error::Inadmissible { index, lambda } => {
                write!(f, "eigenvalue lambda_{index} = {lambda} is outside the admissible cone")
            }
            Error::ConeExit { point, lambda, time } => write!(
                f,
                "Hessian eigenvalue {lambda} at grid point {point} left the admissible cone at t = {time}"
            ),
            Error::InadmissibleAt { point, lambda } => write!(
                f,
                "Hessian eigenvalue {lambda} at grid point {point} is outside the admissible cone"
            ),
            Error::NonFinite { point, value } => {
                write!(f, "non-finite value {value} at grid point {point}")
            }
            Error::GridTooSmall { points_per_axis, needed } => write!(
                f,
                "grid has {points_per_axis} points per axis, stencil needs at least {needed}"
            ),
            Error::UnsupportedDimension { dim } => {
                write!(f, "dimension {dim} is not supported (1 <= n <= 3)")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::OutOfBox { coordinate, half_width } => write!(
                f,
                "coordinate {coordinate} lies outside the source box [-{half_width}, {half_width}]"
            ),
            Error::SnapshotMissing { time } => write!(f, "no snapshot recorded at t = {time}"),
            Error::InsufficientSamples { needed, found } => {
                write!(f, "need at least {needed} samples, got {found}")
            }
            Error::NonPositiveSample { index, value } => {
                write!(f, "sample {index} has non-positive value {value}")
            }
            Error::Pole { lambda } => write!(f, "lambda = {lambda} sits on the pole -a-b"),
            Error::InvalidArgument(msg) => f.write_str(msg),
            Error::ConditionNotACone => f.write_str(
                "condition A is 2-homogeneity, not a Hessian bound; use homogeneity_defect",
            ),
            Error::LinearSolveFailed { iterations, reduction } => write!(
                f,
                "linear solve stalled after {iterations} iterations (residual reduction {reduction:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
