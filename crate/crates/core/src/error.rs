use crate::expr::{EvalError, ParseError};

/// Coarse classification used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    /// Bad input: configuration, expressions, data files.
    Config,
    /// A numerical routine could not produce a result.
    Solver,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("`{0}` must not depend on the control")]
    ConstraintUsesControl(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("state blew up at t = {t} (|q| = {norm:e})")]
    BlowUp { t: f64, norm: f64 },
    #[error("transition matrix numerically singular at t = {t} (condition {cond:e})")]
    SingularTransition { t: f64, cond: f64 },
    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("interval [{from}, {to}] is not contained in [0, {t_final}]")]
    Range { from: f64, to: f64, t_final: f64 },
    #[error("spike bound not achieved for rho = {rho}: sup = {sup:e}")]
    BoundNotAchieved { rho: f64, sup: f64 },
    #[error("unsupported control set: {0}")]
    UnsupportedOmega(String),
    #[error("penalized cost is zero; multipliers are undefined")]
    DegenerateState,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Parse { .. }
            | Error::MissingField(_)
            | Error::DimensionMismatch(_)
            | Error::ConstraintUsesControl(_)
            | Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::Io { .. } => Category::Config,
            _ => Category::Solver,
        }
    }

    pub(crate) fn eval(t: f64) -> impl FnOnce(EvalError) -> Error {
        move |source| Error::Eval { t, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
