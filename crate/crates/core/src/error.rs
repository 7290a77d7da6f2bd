use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, signs, symmetry).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A regressor or measurement returned a non-finite sample.
    #[error("non-finite value from {source_name} at t = {t}")]
    Evaluation { source_name: String, t: f64 },

    #[error("excitation analysis failed: windows disagree on numerical rank {ranks:?}")]
    RankMismatch { ranks: Vec<usize> },

    #[error("non-finite derivative at t = {t} in state block `{block}`")]
    Integration { t: f64, block: String },

    /// Omega lost positive definiteness; the integrator step is too large.
    #[error("{module}: {what} (node {node:?}, t = {t}); try a smaller step")]
    Numerical {
        module: &'static str,
        what: String,
        node: Option<usize>,
        t: f64,
    },

    #[error("plant design error: {0}")]
    Design(String),

    #[error("decay fit error: {0}")]
    Fit(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("stability error: {0}")]
    Stability(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by bad input or configuration rather than by
    /// numerics going wrong at run time.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Contract(_) | Error::Design(_) | Error::Graph(_)
        )
    }
}
