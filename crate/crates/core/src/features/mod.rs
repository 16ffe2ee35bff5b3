//! Automated preparation between the raw table and the trainer: input
//! joining, label encoding, stratified splitting and hashed TF-IDF.

mod labels;
mod split;
mod tfidf;

pub use labels::{encode_labels, labels_by_frequency, LabelEncoder};
pub use split::{allocate, stratified_split, Partition, SplitAssignment};
pub use tfidf::{
    bucket_of, fit_features, fnv1a_64, terms, tokenize, vectorize, FeatureSpec, SparseVector, DEFAULT_HASH_DIMENSIONS,
    HASH_FUNCTION_ID,
};

use thiserror::Error;

use crate::intake::{Dataset, Row};

/// Placed between the texts of consecutive input columns.
pub const INPUT_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("need at least two distinct labels")]
    SingleClass,
    #[error("class {class:?} has {count} rows; at least 3 are needed to fill every partition")]
    ClassTooSmall { class: String, count: usize },
    #[error("row {0} has no target value")]
    MissingTarget(usize),
    #[error("cannot fit features on an empty corpus")]
    EmptyCorpus,
    #[error("hash dimensions must be a power of two, got {0}")]
    InvalidDimensions(u32),
    #[error("feature spec is inconsistent: {0}")]
    InvalidSpec(&'static str),
}

/// Joins the cells of `input_columns` in order with [`INPUT_SEPARATOR`].
/// Missing cells contribute empty text.
pub fn join_inputs(d: &Dataset, row: &Row, input_columns: &[String]) -> Result<String, FeatureError> {
    let cells = input_columns
        .iter()
        .map(|c| {
            d.column_index(c)
                .map(|i| row[i].as_deref())
                .ok_or_else(|| FeatureError::UnknownColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(join_cells(cells))
}

/// Same rule as [`join_inputs`] over already-selected cells.
pub fn join_cells<'a>(cells: impl IntoIterator<Item = Option<&'a str>>) -> String {
    cells
        .into_iter()
        .map(|c| c.unwrap_or(""))
        .collect::<Vec<_>>()
        .join(INPUT_SEPARATOR)
}
