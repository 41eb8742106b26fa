use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("factor `{label}`: {source}")]
    Factor {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "matrix is not positive definite (pivot {pivot} = {value:e}); \
         check the model for an improper or degenerate coordinate"
    )]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite adjoint at tape node {node}")]
    NonFiniteAdjoint { node: usize },

    #[error("step size {h:e} fell below the minimum at t = {t}{}", cause_suffix(.cause))]
    Stiffness {
        t: f64,
        h: f64,
        cause: Option<String>,
    },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Data { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn cause_suffix(cause: &Option<String>) -> String {
    match cause {
        Some(c) => format!(" (last evaluation error: {c})"),
        None => String::new(),
    }
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn in_factor(self, label: impl Into<String>) -> Self {
        Error::Factor {
            label: label.into(),
            source: Box::new(self),
        }
    }
}
