use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis matrix is singular")]
    DegenerateBasis,

    #[error("pivot on column {entering} would make the basis singular")]
    DegeneratePivot { entering: usize },

    #[error("linear program is infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("linear program is unbounded along column {column}")]
    Unbounded { column: usize },

    #[error("simplex exceeded its pivot budget of {0}")]
    PivotLimit(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("constraint assembly failed: {0}")]
    Assembly(String),

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
