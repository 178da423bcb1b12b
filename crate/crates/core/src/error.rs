use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-binary treatment value at row {0}")]
    NonBinaryTreatment(usize),
    #[error("missing or non-numeric value at row {row}, column `{col}`")]
    MissingValue { row: usize, col: String },
    #[error("treatment group is empty")]
    EmptyGroup,
    #[error("outcome is constant")]
    DegenerateOutcome,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("at least two posterior draws are required")]
    TooFewDraws,
    #[error("focal group is empty")]
    EmptyFocalGroup,
    #[error("comparison group is empty")]
    EmptyComparisonGroup,
    #[error("every focal unit was discarded")]
    AllFocalDiscarded,
    #[error("perfect separation in logistic regression")]
    Separation,
    #[error("singular design matrix")]
    Singular,
    #[error("inverse-probability weight {0} exceeds the limit")]
    ExtremeWeight(f64),
    #[error("generated sample lost a treatment group")]
    DegenerateSample,
    #[error("offset calibration could not bracket the target share")]
    NoBracket,
    #[error("too few rows to grow a tree: {0}")]
    TooFewRows(usize),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonBinaryTreatment(_) => "NonBinaryTreatment",
            Error::MissingValue { .. } => "MissingValue",
            Error::EmptyGroup => "EmptyGroup",
            Error::DegenerateOutcome => "DegenerateOutcome",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::TooFewDraws => "TooFewDraws",
            Error::EmptyFocalGroup => "EmptyFocalGroup",
            Error::EmptyComparisonGroup => "EmptyComparisonGroup",
            Error::AllFocalDiscarded => "AllFocalDiscarded",
            Error::Separation => "Separation",
            Error::Singular => "Singular",
            Error::ExtremeWeight(_) => "ExtremeWeight",
            Error::DegenerateSample => "DegenerateSample",
            Error::NoBracket => "NoBracket",
            Error::TooFewRows(_) => "TooFewRows",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
