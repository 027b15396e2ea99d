use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector or matrix dimensions disagree with what an operation expects.
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A NaN or infinity appeared where only finite values are allowed.
    NonFinite(&'static str),
    /// An argument violated an operation's precondition.
    InvalidArgument(String),
    /// A dataset needed for training was empty or unusable.
    EmptyData(&'static str),
    /// The scripted expert was asked to act for a non-demonstrator body.
    ExpertUnavailable,
    /// A policy returned a non-finite action during a rollout.
    PolicyDiverged { step: usize },
    /// Every sample of a batch was rejected.
    BatchExhausted,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyData(what) => write!(f, "empty data: {what}"),
            Error::ExpertUnavailable => {
                write!(f, "scripted experts only drive demonstrator dynamics")
            }
            Error::PolicyDiverged { step } => {
                write!(f, "policy produced a non-finite action at step {step}")
            }
            Error::BatchExhausted => write!(f, "every sample in the batch was rejected"),
        }
    }
}

#[cfg(any(test, feature = "std"))]
impl std::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
