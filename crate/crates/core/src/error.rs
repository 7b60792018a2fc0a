use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A measure without atoms has no separation.
    UndefinedSeparation,
    /// An operation that needs interior support received a boundary atom.
    BoundarySupport { t: f64, s: f64 },
    /// Atom with a non-finite or out-of-range location, or a negative weight.
    InvalidAtom { t: f64, s: f64, w: f64 },
    /// K atoms cannot be placed ε-apart inside the open square.
    InfeasibleGeometry { k: usize, epsilon: f64 },
    IndexOutOfRange { index: usize, len: usize },
    /// Balanced transport requested on measures of different mass.
    UnequalMass { a: f64, b: f64 },
    TooManyAtoms { limit: usize, got: usize },
    NonFinite,
    InvalidArgument(String),
    /// Interpolation or verification failed at a point.
    Verification {
        what: String,
        t: f64,
        s: f64,
        value: f64,
        bound: f64,
    },
    Singular,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UndefinedSeparation => write!(f, "undefined separation: measure has no atoms"),
            Error::BoundarySupport { t, s } => {
                write!(f, "atom at ({t}, {s}) is not in the open unit square")
            }
            Error::InvalidAtom { t, s, w } => write!(f, "invalid atom ({t}, {s}) with weight {w}"),
            Error::InfeasibleGeometry { k, epsilon } => write!(
                f,
                "{k} atoms cannot be {epsilon}-separated inside the unit square"
            ),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for {len} functions")
            }
            Error::UnequalMass { a, b } => write!(
                f,
                "masses differ ({a} vs {b}); use gen_wasserstein for unbalanced measures"
            ),
            Error::TooManyAtoms { limit, got } => {
                write!(f, "{got} atoms exceeds the limit of {limit}")
            }
            Error::NonFinite => write!(f, "non-finite input"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Verification {
                what,
                t,
                s,
                value,
                bound,
            } => write!(
                f,
                "verification failed ({what}) at ({t}, {s}): value {value}, bound {bound}"
            ),
            Error::Singular => write!(f, "singular linear system"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(String::from(msg))
}
