//! Dataset ingestion: train/validation/test splits of labelled posts.
//!
//! Files are UTF-8 CSV (RFC 4180 quoting) or TSV (no quoting) with a header row naming
//! an id column, a text column and a label column. Labels `fake`/`real` map to 0/1.
//! Rows that cannot be used (unknown label, empty text, duplicate id) are skipped and
//! reported as [`RowIssue`]s; a missing column is fatal.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class of a post. `Fake` is 0 and `Real` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Fake = 0,
    Real = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Label> {
        match index {
            0 => Ok(Label::Fake),
            1 => Ok(Label::Real),
            other => Err(Error::LabelOutOfRange(other)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Real => "real",
        }
    }

    /// Parses `fake`/`real` case-insensitively, ignoring surrounding whitespace.
    pub fn parse(raw: &str) -> Option<Label> {
        let trimmed = raw.trim();
        if trimmed.eq_ignore_ascii_case("fake") {
            Some(Label::Fake)
        } else if trimmed.eq_ignore_ascii_case("real") {
            Some(Label::Real)
        } else {
            None
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One split of the dataset, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub documents: Vec<LabeledDocument>,
}

impl DatasetSplit {
    pub fn new(name: SplitName) -> Self {
        DatasetSplit {
            name,
            documents: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.documents.iter().map(|d| d.label).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Tsv,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "tsv" => Ok(TableFormat::Tsv),
            other => Err(Error::Config(format!("unknown table format `{other}`"))),
        }
    }
}

/// Column names and dialect of a split file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableOptions {
    pub format: TableFormat,
    pub id_column: String,
    pub text_column: String,
    pub label_column: String,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            format: TableFormat::Csv,
            id_column: "id".to_string(),
            text_column: "tweet".to_string(),
            label_column: "label".to_string(),
        }
    }
}

impl TableOptions {
    fn reader_builder(&self) -> csv::ReaderBuilder {
        let mut builder = csv::ReaderBuilder::new();
        builder.has_headers(true).flexible(true);
        if self.format == TableFormat::Tsv {
            builder.delimiter(b'\t').quoting(false);
        }
        builder
    }

    fn writer_builder(&self) -> csv::WriterBuilder {
        let mut builder = csv::WriterBuilder::new();
        if self.format == TableFormat::Tsv {
            builder.delimiter(b'\t').quote_style(csv::QuoteStyle::Never);
        }
        builder
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowIssueKind {
    UnknownLabel(String),
    EmptyText,
    DuplicateId(String),
    MissingField,
}

/// A skipped row with its 1-based line number in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: u64,
    pub kind: RowIssueKind,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RowIssueKind::UnknownLabel(raw) => write!(f, "line {}: unknown label `{raw}`", self.line),
            RowIssueKind::EmptyText => write!(f, "line {}: empty text", self.line),
            RowIssueKind::DuplicateId(id) => write!(f, "line {}: duplicate id `{id}`", self.line),
            RowIssueKind::MissingField => write!(f, "line {}: row has too few fields", self.line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedSplit {
    pub split: DatasetSplit,
    pub issues: Vec<RowIssue>,
}

struct ColumnIndices {
    id: usize,
    text: usize,
    label: Option<usize>,
}

fn locate_columns(headers: &csv::StringRecord, options: &TableOptions, need_label: bool) -> Result<ColumnIndices> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label = if need_label {
        Some(find(&options.label_column)?)
    } else {
        headers.iter().position(|h| h.trim() == options.label_column)
    };
    Ok(ColumnIndices {
        id: find(&options.id_column)?,
        text: find(&options.text_column)?,
        label,
    })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads a labelled split from any reader.
pub fn read_split<R: Read>(name: SplitName, reader: R, options: &TableOptions) -> Result<LoadedSplit> {
    let mut rdr = options.reader_builder().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(&headers, options, true)?;
    let label_col = cols.label.expect("label column required");

    let mut split = DatasetSplit::new(name);
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let (Some(id), Some(text), Some(raw_label)) = (record.get(cols.id), record.get(cols.text), record.get(label_col))
        else {
            issues.push(RowIssue {
                line,
                kind: RowIssueKind::MissingField,
            });
            continue;
        };
        let Some(label) = Label::parse(raw_label) else {
            issues.push(RowIssue {
                line,
                kind: RowIssueKind::UnknownLabel(raw_label.to_string()),
            });
            continue;
        };
        if text.trim().is_empty() {
            issues.push(RowIssue {
                line,
                kind: RowIssueKind::EmptyText,
            });
            continue;
        }
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            issues.push(RowIssue {
                line,
                kind: RowIssueKind::DuplicateId(id),
            });
            continue;
        }
        split.documents.push(LabeledDocument {
            id,
            text: text.to_string(),
            label,
        });
    }
    for issue in &issues {
        log::warn!("{name} split: skipped {issue}");
    }
    Ok(LoadedSplit { split, issues })
}

/// Loads a labelled split from disk.
pub fn load_split(path: &Path, name: SplitName, options: &TableOptions) -> Result<LoadedSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_split(name, file, options)
}

/// An input row for prediction; the label is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputRow {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
}

/// Reads rows for prediction. Rows missing a field are skipped and reported.
pub fn read_unlabeled<R: Read>(reader: R, options: &TableOptions) -> Result<(Vec<InputRow>, Vec<RowIssue>)> {
    let mut rdr = options.reader_builder().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(&headers, options, false)?;
    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        match (record.get(cols.id), record.get(cols.text)) {
            (Some(id), Some(text)) => rows.push(InputRow {
                id: id.trim().to_string(),
                text: text.to_string(),
                label: cols.label.and_then(|c| record.get(c)).and_then(Label::parse),
            }),
            _ => issues.push(RowIssue {
                line,
                kind: RowIssueKind::MissingField,
            }),
        }
    }
    Ok((rows, issues))
}

/// Serializes a split with the configured column names and `fake`/`real` labels.
pub fn write_split<W: Write>(split: &DatasetSplit, writer: W, options: &TableOptions) -> Result<()> {
    let mut wtr = options.writer_builder().from_writer(writer);
    wtr.write_record([&options.id_column, &options.text_column, &options.label_column])?;
    for doc in &split.documents {
        wtr.write_record([doc.id.as_str(), doc.text.as_str(), doc.label.as_str()])?;
    }
    wtr.flush().map_err(|e| Error::io("<split writer>", e))?;
    Ok(())
}

pub fn save_split(split: &DatasetSplit, path: &Path, options: &TableOptions) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_split(split, std::io::BufWriter::new(file), options)
}

/// Class counts of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub real: usize,
    pub fake: usize,
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.real + self.fake
    }
}

pub fn class_distribution(split: &DatasetSplit) -> ClassDistribution {
    split
        .documents
        .iter()
        .fold(ClassDistribution::default(), |mut acc, doc| {
            match doc.label {
                Label::Real => acc.real += 1,
                Label::Fake => acc.fake += 1,
            }
            acc
        })
}

/// The three splits of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub train: DatasetSplit,
    pub validation: DatasetSplit,
    pub test: DatasetSplit,
}

impl Corpus {
    pub fn split(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}
