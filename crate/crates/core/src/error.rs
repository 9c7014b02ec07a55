use thiserror::Error;

/// Which side of a box constraint an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

impl std::fmt::Display for BoundSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundSide::Lower => f.write_str("lower"),
            BoundSide::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("exponent at byte {offset} is not a constant")]
    ExponentNotConstant { offset: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("agent {agent}: f_xx = {value} is not positive at x = {x}, t = {t}")]
    NonConvexSample {
        agent: usize,
        x: f64,
        t: f64,
        value: f64,
    },

    #[error("agent {agent}: switching signal needs the {side} bound, which is absent")]
    MissingBound { agent: usize, side: BoundSide },

    #[error("agent {agent}: empty box at t = {t} (lower {lower} > upper {upper})")]
    EmptyBox {
        agent: usize,
        t: f64,
        lower: f64,
        upper: f64,
    },

    #[error("state diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("no sign change of the allocation residual at t = {t}")]
    Infeasible { t: f64 },

    #[error("agent {agent}: cannot bracket the stationary point at t = {t}")]
    NoBracket { agent: usize, t: f64 },

    #[error("sum of switched weightings vanishes at t = {t}")]
    SingularDenominator { t: f64 },
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Errors caused by the run itself rather than by the configuration.
    pub fn is_runtime_failure(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::Infeasible { .. }
                | Error::NoBracket { .. }
                | Error::SingularDenominator { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
