//! Data intake: CSV parsing, column profiling and label balance.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rows shown in a [`DataReport`] preview.
pub const PREVIEW_ROWS: usize = 10;
/// Fraction of non-missing cells that must parse as numbers for a numeric column.
pub const NUMERIC_FRACTION: f64 = 0.95;
/// Lower bound of the categorical distinct-value threshold.
pub const CATEGORICAL_MIN_DISTINCT: usize = 20;
/// Fraction of rows forming the upper categorical distinct-value threshold.
pub const CATEGORICAL_ROW_FRACTION: f64 = 0.05;
/// Most frequent values kept for a categorical column.
pub const TOP_CATEGORIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntakeError {
    #[error("input is empty: no header record")]
    EmptyInput,
    #[error("input is not valid UTF-8")]
    InvalidEncoding,
    #[error("record {0} has {1} cells but the header has {2}")]
    RaggedRow(usize, usize, usize),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("column {0} has an empty name")]
    EmptyColumnName(usize),
    #[error("unterminated quoted field in record {0}")]
    UnterminatedQuote(usize),
    #[error("unexpected character after closing quote in record {0}")]
    MalformedQuote(usize),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

impl IntakeError {
    /// Stable machine-readable code, used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            IntakeError::EmptyInput => "EmptyInput",
            IntakeError::InvalidEncoding => "InvalidEncoding",
            IntakeError::RaggedRow(..) => "RaggedRow",
            IntakeError::DuplicateColumn(_) => "DuplicateColumn",
            IntakeError::EmptyColumnName(_) => "EmptyColumnName",
            IntakeError::UnterminatedQuote(_) => "UnterminatedQuote",
            IntakeError::MalformedQuote(_) => "MalformedQuote",
            IntakeError::UnknownColumn(_) => "UnknownColumn",
        }
    }
}

/// Content-addressed dataset identifier: the first 16 hex digits of the
/// SHA-256 of the uploaded bytes (of the canonical CSV rendering for
/// tables built in memory).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(pub String);

impl DatasetId {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        DatasetId(crate::sha256_hex(bytes)[..16].to_string())
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A single record; `None` marks a missing cell.
pub type Row = Vec<Option<String>>;

/// Rectangular table with unique, non-empty column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: DatasetId,
    column_names: Vec<String>,
    rows: Vec<Row>,
}

impl Dataset {
    /// Builds a dataset from in-memory rows. The id is derived from a
    /// canonical CSV rendering of the table.
    pub fn new(column_names: Vec<String>, rows: Vec<Row>) -> Result<Self, IntakeError> {
        check_header(&column_names)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(IntakeError::RaggedRow(i + 1, row.len(), column_names.len()));
            }
        }
        let mut d = Dataset {
            id: DatasetId(String::new()),
            column_names,
            rows,
        };
        d.id = DatasetId::from_bytes(d.to_csv().as_bytes());
        Ok(d)
    }

    pub fn id(&self) -> &DatasetId {
        &self.id
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Cells of one column, in row order.
    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = Option<&str>> + '_, IntakeError> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| IntakeError::UnknownColumn(name.to_string()))?;
        Ok(self.rows.iter().map(move |r| r[idx].as_deref()))
    }

    /// Copy of the table keeping only the rows for which `keep` holds.
    pub fn filter_rows(&self, mut keep: impl FnMut(&Row) -> bool) -> Dataset {
        let rows = self.rows.iter().filter(|r| keep(r)).cloned().collect();
        Dataset {
            id: self.id.clone(),
            column_names: self.column_names.clone(),
            rows,
        }
    }

    /// RFC 4180 rendering; missing cells become empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        write_record(&mut out, self.column_names.iter().map(|s| Some(s.as_str())));
        for row in &self.rows {
            write_record(&mut out, row.iter().map(|c| c.as_deref()));
        }
        out
    }
}

fn write_record<'a>(out: &mut String, cells: impl ExactSizeIterator<Item = Option<&'a str>>) {
    // a lone empty field would be a blank line, which the reader skips
    let lone = cells.len() == 1;
    for (i, cell) in cells.enumerate() {
        if i > 0 {
            out.push(',');
        }
        let cell = cell.unwrap_or("");
        if cell.contains([',', '"', '\n', '\r'])
            || cell.starts_with('\u{feff}')
            || (lone && cell.is_empty())
            || (!cell.is_empty() && cell.trim().is_empty())
        {
            out.push('"');
            out.push_str(&cell.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(cell);
        }
    }
    out.push('\n');
}

fn check_header(names: &[String]) -> Result<(), IntakeError> {
    let mut seen = HashSet::new();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(IntakeError::EmptyColumnName(i));
        }
        if !seen.insert(name.as_str()) {
            return Err(IntakeError::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

struct Field {
    text: String,
    quoted: bool,
}

impl Field {
    fn into_cell(self) -> Option<String> {
        if self.text.is_empty() || (!self.quoted && self.text.trim().is_empty()) {
            None
        } else {
            Some(self.text)
        }
    }
}

/// Splits RFC 4180 text into records of fields. Completely empty lines are
/// skipped.
fn read_records(text: &str) -> Result<Vec<Vec<Field>>, IntakeError> {
    let mut records = Vec::new();
    let mut record: Vec<Field> = Vec::new();
    let mut field = Field {
        text: String::new(),
        quoted: false,
    };
    let mut chars = text.chars().peekable();
    // true at the start of a field, before any character was consumed
    let mut at_start = true;
    let mut line_has_content = false;

    fn end_record(records: &mut Vec<Vec<Field>>, record: &mut Vec<Field>, field: &mut Field, line_has_content: bool) {
        let f = std::mem::replace(
            field,
            Field {
                text: String::new(),
                quoted: false,
            },
        );
        if line_has_content || !record.is_empty() {
            record.push(f);
            records.push(std::mem::take(record));
        }
    }

    while let Some(c) = chars.next() {
        match c {
            '"' if at_start => {
                field.quoted = true;
                line_has_content = true;
                let record_no = records.len();
                loop {
                    match chars.next() {
                        None => return Err(IntakeError::UnterminatedQuote(record_no)),
                        Some('"') => {
                            if chars.peek() == Some(&'"') {
                                chars.next();
                                field.text.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(other) => field.text.push(other),
                    }
                }
                match chars.peek() {
                    None | Some(',') | Some('\n') | Some('\r') => {}
                    Some(_) => return Err(IntakeError::MalformedQuote(record_no)),
                }
                at_start = false;
            }
            ',' => {
                line_has_content = true;
                record.push(std::mem::replace(
                    &mut field,
                    Field {
                        text: String::new(),
                        quoted: false,
                    },
                ));
                at_start = true;
            }
            '\r' | '\n' => {
                if c == '\r' && chars.peek() == Some(&'\n') {
                    chars.next();
                }
                end_record(&mut records, &mut record, &mut field, line_has_content);
                at_start = true;
                line_has_content = false;
            }
            other => {
                line_has_content = true;
                field.text.push(other);
                at_start = false;
            }
        }
    }
    end_record(&mut records, &mut record, &mut field, line_has_content);
    Ok(records)
}

/// Parses UTF-8 CSV bytes whose first record is the header.
///
/// Empty cells, and unquoted cells holding only whitespace, are missing.
pub fn parse_csv(bytes: &[u8]) -> Result<Dataset, IntakeError> {
    let text = std::str::from_utf8(bytes).map_err(|_| IntakeError::InvalidEncoding)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut records = read_records(text)?.into_iter();
    let header = records.next().ok_or(IntakeError::EmptyInput)?;
    let column_names: Vec<String> = header.into_iter().map(|f| f.text).collect();
    check_header(&column_names)?;

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        if record.len() != column_names.len() {
            return Err(IntakeError::RaggedRow(i + 1, record.len(), column_names.len()));
        }
        rows.push(record.into_iter().map(Field::into_cell).collect());
    }
    Ok(Dataset {
        id: DatasetId::from_bytes(bytes),
        column_names,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Text,
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub inferred_kind: ColumnKind,
    pub missing_count: usize,
    pub distinct_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_stats: Option<NumericStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_categories: Option<Vec<CategoryCount>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataReport {
    pub dataset_id: DatasetId,
    pub row_count: usize,
    pub profiles: Vec<ColumnProfile>,
    pub preview: Vec<Row>,
    pub duplicate_row_fraction: f64,
}

impl DataReport {
    pub fn profile(&self, column: &str) -> Option<&ColumnProfile> {
        self.profiles.iter().find(|p| p.name == column)
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn profile_column(name: &str, cells: &[Option<&str>], row_count: usize) -> ColumnProfile {
    let present: Vec<&str> = cells.iter().flatten().copied().collect();
    let missing_count = cells.len() - present.len();

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in &present {
        *counts.entry(v).or_default() += 1;
    }
    let distinct_count = counts.len();

    let numbers: Vec<f64> = present.iter().filter_map(|c| parse_number(c)).collect();
    let categorical_limit =
        CATEGORICAL_MIN_DISTINCT.max((CATEGORICAL_ROW_FRACTION * row_count as f64).floor() as usize);

    let inferred_kind = if !present.is_empty() && numbers.len() as f64 >= NUMERIC_FRACTION * present.len() as f64 {
        ColumnKind::Numeric
    } else if distinct_count <= categorical_limit {
        ColumnKind::Categorical
    } else {
        ColumnKind::Text
    };

    let numeric_stats = (inferred_kind == ColumnKind::Numeric).then(|| numeric_stats(&numbers));
    let top_categories = (inferred_kind == ColumnKind::Categorical).then(|| {
        let mut top: Vec<CategoryCount> = counts
            .iter()
            .map(|(v, c)| CategoryCount {
                value: v.to_string(),
                count: *c,
            })
            .collect();
        top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
        top.truncate(TOP_CATEGORIES);
        top
    });

    ColumnProfile {
        name: name.to_string(),
        inferred_kind,
        missing_count,
        distinct_count,
        numeric_stats,
        top_categories,
    }
}

fn numeric_stats(values: &[f64]) -> NumericStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_dev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    NumericStats {
        mean,
        std_dev,
        min,
        max,
    }
}

/// Profiles every column and computes the preview and duplicate fraction.
pub fn profile_dataset(d: &Dataset) -> DataReport {
    let row_count = d.row_count();
    let profiles = d
        .column_names()
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let cells: Vec<Option<&str>> = d.rows().iter().map(|r| r[idx].as_deref()).collect();
            profile_column(name, &cells, row_count)
        })
        .collect();

    let distinct_rows = d.rows().iter().collect::<HashSet<_>>().len();
    let duplicate_row_fraction = if row_count == 0 {
        0.0
    } else {
        (row_count - distinct_rows) as f64 / row_count as f64
    };

    DataReport {
        dataset_id: d.id().clone(),
        row_count,
        profiles,
        preview: d.rows().iter().take(PREVIEW_ROWS).cloned().collect(),
        duplicate_row_fraction,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBalance {
    pub column: String,
    pub counts: BTreeMap<String, usize>,
    /// Largest class count over smallest; 1 when there are fewer than two classes.
    pub imbalance_ratio: f64,
}

impl LabelBalance {
    pub fn from_counts(column: impl Into<String>, counts: BTreeMap<String, usize>) -> Self {
        let max = counts.values().copied().max().unwrap_or(0);
        let min = counts.values().copied().filter(|c| *c > 0).min().unwrap_or(0);
        let imbalance_ratio = if min == 0 { 1.0 } else { max as f64 / min as f64 };
        LabelBalance {
            column: column.into(),
            counts,
            imbalance_ratio,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Counts over the non-missing values of `column`.
pub fn label_balance(d: &Dataset, column: &str) -> Result<LabelBalance, IntakeError> {
    let mut counts = BTreeMap::new();
    for cell in d.column(column)?.flatten() {
        *counts.entry(cell.to_string()).or_insert(0usize) += 1;
    }
    Ok(LabelBalance::from_counts(column, counts))
}
