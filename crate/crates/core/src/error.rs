use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: feature index {index} exceeds n_features {n_features}")]
    FeatureIndex {
        line: usize,
        index: usize,
        n_features: usize,
    },

    #[error("line {line}: raw label {label} has no class mapping")]
    UnknownLabel { line: usize, label: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0} requires an image shape")]
    MissingImageShape(&'static str),

    #[error("image shape {height}x{width} does not cover {n_features} features")]
    ShapeMismatch {
        height: usize,
        width: usize,
        n_features: usize,
    },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("threshold grid has {cells} cells, above the enumeration limit of {limit}")]
    GridTooLarge { cells: u128, limit: u128 },

    #[error("exact search exceeded its node budget of {0}")]
    SearchBudget(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::FeatureIndex { .. } => "feature_index",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::EmptyDataset => "empty_dataset",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::MissingImageShape(_) => "missing_image_shape",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::Config(_) => "config",
            Error::Schema(_) => "schema",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::SearchBudget(_) => "search_budget",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
