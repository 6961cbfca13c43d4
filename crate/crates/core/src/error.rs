use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("label {label:?} is not in the scheme (line {line})")]
    UnknownLabel { label: String, line: u64 },

    #[error("duplicate annotation for item {item:?} by annotator {annotator:?}")]
    DuplicateCell { item: String, annotator: String },

    #[error("no annotations")]
    NoAnnotations,

    #[error("empty annotation set")]
    EmptyAnnotationSet,

    #[error("agreement undefined: fewer than 2 annotations (got {got})")]
    TooFewAnnotations { got: usize },

    #[error("kappa undefined: expected agreement equals 1")]
    DegenerateKappa,

    #[error("no items with enough annotations in scope")]
    NoUsableItems,

    #[error("no item has a defined polarization score")]
    NoDefinedScores,

    #[error("infeasible partition constraints: {0}")]
    InfeasiblePartition(String),

    #[error("partition space too large ({count} partitions); pass an explicit override to enumerate")]
    PartitionSpaceTooLarge { count: u128 },

    #[error("tie on item {item:?} under tie policy {policy:?}")]
    UnresolvedTie { item: String, policy: String },

    #[error("no annotator flagged expert")]
    NoExpert,

    #[error("stratified split impossible: class {class:?} absent")]
    MissingClass { class: String },

    #[error("too few items to split (got {got})")]
    TooFewItems { got: usize },

    #[error("training set contains a single class")]
    SingleClassTrain,

    #[error("all documents are empty")]
    AllDocsEmpty,

    #[error("prediction sets cover different items; only in first: {only_a:?}, only in second: {only_b:?}")]
    CoverageMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("predictions missing for gold items: {0:?}")]
    MissingPredictions(Vec<String>),

    #[error("pipeline stage {stage:?} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn at_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
