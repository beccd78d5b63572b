use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// A single data-validation finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub individual: Option<String>,
    pub time: Option<f64>,
    pub message: String,
}

impl Issue {
    pub fn new(message: impl Into<String>) -> Self {
        Issue {
            individual: None,
            time: None,
            message: message.into(),
        }
    }

    pub fn individual(mut self, id: impl Into<String>) -> Self {
        self.individual = Some(id.into());
        self
    }

    pub fn at(mut self, time: f64) -> Self {
        self.time = Some(time);
        self
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = &self.individual {
            write!(f, "individual {id}: ")?;
        }
        if let Some(t) = self.time {
            write!(f, "time {t}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{} validation issue(s), first: {}", .0.len(), .0[0])]
    Validation(Vec<Issue>),
    #[error("mean sojourn time undefined for state {state}")]
    UndefinedSojourn { state: usize },
    #[error("linear predictor for `{coefficient}` out of range: {value}")]
    NumericRange { coefficient: String, value: f64 },
    #[error("invalid interval: end {end} precedes start {start}")]
    InvalidInterval { start: f64, end: f64 },
    #[error("enumeration refused: {unknown} unknown-state occasions exceed the bound of {bound}")]
    TooManyUnknown { unknown: usize, bound: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("log-likelihood is not finite at the initial values")]
    InitNotFinite,
    #[error("covariance matrix is not positive definite; retry with nearest-PD repair enabled")]
    NotPositiveDefinite,
    #[error("covariance unavailable: the Hessian is singular")]
    SingularCovariance,
    #[error("individual `{id}`: {source}")]
    Individual { id: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn for_individual(self, id: &str) -> Self {
        Error::Individual {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
