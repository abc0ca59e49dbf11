use thiserror::Error;

/// Stage of an ICS fit at which an estimator failure occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcsStage {
    S1,
    S2,
}

impl std::fmt::Display for IcsStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IcsStage::S1 => write!(f, "S1"),
            IcsStage::S2 => write!(f, "S2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite or asymmetric entries")]
    InvalidMatrix,
    #[error("scatter is numerically singular (eigenvalue {eigenvalue:e} below tolerance)")]
    SingularScatter { eigenvalue: f64 },
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("iteration did not converge within {max_iter} steps (last change {last_change:e})")]
    NotConverged { max_iter: usize, last_change: f64 },
    #[error("data row {row} coincides with the location estimate")]
    DegenerateRow { row: usize },
    #[error("subset size h = {h} must exceed dimension p = {p}")]
    InsufficientSubsetSize { h: usize, p: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeError { expected: String, got: String },
    #[error("outlier row {row} has zero norm; normalized distance undefined")]
    UndefinedNormalization { row: usize },
    #[error("outlier index set is empty")]
    EmptyOutlierSet,
    #[error("design matrix is numerically singular")]
    SingularDesign,
    #[error("response is constant; lasso path undefined")]
    DegenerateResponse,
    #[error("column {column} is not binary")]
    InvalidColumnKind { column: String },
    #[error("precondition not met: {0}")]
    ConditionNotMet(String),
    #[error("mean SA efficiency is zero; ratio undefined")]
    UndefinedRatio,
    #[error("utility loss is zero; efficiency unbounded")]
    InfiniteEfficiency,
    #[error("ingest error at row {row}, column {column}: {message}")]
    IngestError {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("estimator failed at ICS stage {stage}: {source}")]
    IcsFit {
        stage: IcsStage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
