use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node `{child}` refers to unknown parent `{parent}`")]
    DanglingParent { child: String, parent: String },

    #[error("child probabilities at node `{node}` sum to {sum}, expected 1")]
    ProbabilitySumViolation { node: String, sum: String },

    #[error("node `{node}` has non-positive transition probability {prob}")]
    NonPositiveProbability { node: String, prob: String },

    #[error("leaf `{node}` sits at time {time}, but the horizon is {horizon}")]
    RaggedHorizon { node: String, time: usize, horizon: usize },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("missing value at node `{0}`")]
    MissingValue(String),

    #[error("missing claim value for leaf `{0}`")]
    MissingLeaf(String),

    #[error("invalid price factors: {0}")]
    InvalidFactors(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero conditional variance of the stock increment at node `{0}`")]
    DegenerateNode(String),

    #[error("model is not complete: {0}")]
    NotComplete(String),

    #[error("model is not binomial at node `{0}`")]
    NotBinomial(String),

    #[error("singular normal equations (zero pivot in column {0})")]
    SingularSystem(usize),

    #[error("oracle system has {unknowns} unknowns, limit is {limit}")]
    TooLarge { unknowns: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a mathematical precondition (as opposed to bad
    /// input or I/O).
    pub fn is_mathematical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateNode(_) | Error::SingularSystem(_) | Error::NotComplete(_) | Error::NotBinomial(_)
        )
    }
}
