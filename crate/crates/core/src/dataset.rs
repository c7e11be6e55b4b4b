//! Column-major labeled feature matrix and its tab-delimited file format.
//!
//! A feature table has a header row `label` followed by one cell per
//! feature of the form `name:kind:group`, where `kind` is `num` or
//! `cat(L1|L2|...)` and `group` is one of `i`, `ii`, `iii`, `iv`, `-`.
//! Each data row carries `C`/`NC` (or an empty cell when unlabeled) and
//! the feature values. Categorical values are written as level names.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contracts::{FeatureGroup, FeatureKind, FeatureSchema, FeatureSpec, Label, SchemaError};

/// Code stored for a categorical value whose level is not in the schema.
pub const UNSEEN_LEVEL: f64 = f64::NAN;

/// Decode a stored categorical value into a level index.
pub fn level_code(value: f64) -> Option<usize> {
    if value.is_finite() && value >= 0.0 && value.fract() == 0.0 && value < 64.0 {
        Some(value as usize)
    } else {
        None
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("column {feature} has {got} values, expected {expected}")]
    Ragged { feature: String, got: usize, expected: usize },
    #[error("feature `{feature}` in model schema does not match the data")]
    SchemaMismatch { feature: String },
}

/// Labeled feature rows stored by column. Categorical columns hold level
/// indices as `f64`; [`UNSEEN_LEVEL`] marks levels missing from the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    columns: Vec<Vec<f64>>,
    labels: Vec<Option<Label>>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        columns: Vec<Vec<f64>>,
        labels: Vec<Option<Label>>,
    ) -> Result<Self, DatasetError> {
        assert_eq!(schema.len(), columns.len(), "one column per schema feature");
        for (spec, col) in schema.features().iter().zip(&columns) {
            if col.len() != labels.len() {
                return Err(DatasetError::Ragged {
                    feature: spec.name.clone(),
                    got: col.len(),
                    expected: labels.len(),
                });
            }
        }
        Ok(Dataset { schema, columns, labels })
    }

    /// Build from fully labeled rows given in row-major order.
    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>], labels: &[Label]) -> Self {
        let p = schema.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for row in rows {
            assert_eq!(row.len(), p, "row width must match schema");
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Dataset { schema, columns, labels: labels.iter().copied().map(Some).collect() }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn label(&self, row: usize) -> Option<Label> {
        self.labels[row]
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    /// Label of a row that must be labeled.
    pub fn known_label(&self, row: usize) -> Label {
        self.labels[row].expect("row is labeled")
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Per-class row counts `[C, NC]` over labeled rows.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for l in self.labels.iter().flatten() {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Keep only the given feature columns, in the given order.
    pub fn select_features(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.select(indices),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Keep the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Append a feature column.
    pub fn with_feature(&self, spec: FeatureSpec, column: Vec<f64>) -> Result<Dataset, DatasetError> {
        let mut features = self.schema.features().to_vec();
        features.push(spec);
        let mut columns = self.columns.clone();
        columns.push(column);
        Dataset::new(FeatureSchema::new(features)?, columns, self.labels.clone())
    }

    /// Re-express this dataset in the column order and level coding of
    /// `target`. Features are matched by name; categorical levels by
    /// level name, with unknown levels becoming [`UNSEEN_LEVEL`].
    pub fn conform_to(&self, target: &FeatureSchema) -> Result<Dataset, DatasetError> {
        let mut columns = Vec::with_capacity(target.len());
        for spec in target.features() {
            let idx = self
                .schema
                .index_of(&spec.name)
                .ok_or_else(|| DatasetError::SchemaMismatch { feature: spec.name.clone() })?;
            let source = &self.columns[idx];
            let column = match (&self.schema.get(idx).kind, &spec.kind) {
                (FeatureKind::Numeric, FeatureKind::Numeric) => source.clone(),
                (FeatureKind::Categorical { levels: ours }, FeatureKind::Categorical { levels: theirs }) => {
                    let remap: Vec<f64> = ours
                        .iter()
                        .map(|l| theirs.iter().position(|t| t == l).map_or(UNSEEN_LEVEL, |p| p as f64))
                        .collect();
                    source.iter().map(|&v| level_code(v).map_or(UNSEEN_LEVEL, |c| remap[c])).collect()
                }
                _ => return Err(DatasetError::SchemaMismatch { feature: spec.name.clone() }),
            };
            columns.push(column);
        }
        Ok(Dataset { schema: target.clone(), columns, labels: self.labels.clone() })
    }

    /// Content hash over schema, values and labels.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for spec in self.schema.features() {
            hasher.update(header_cell(spec).as_bytes());
            hasher.update([0u8]);
        }
        for col in &self.columns {
            for v in col {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        for l in &self.labels {
            hasher.update([l.map_or(2u8, |l| l.index() as u8)]);
        }
        hex(&hasher.finalize())
    }

    /// Write the tab-delimited feature table.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::from("label");
        for spec in self.schema.features() {
            line.push('\t');
            line.push_str(&header_cell(spec));
        }
        writeln!(out, "{line}")?;
        for r in 0..self.n_rows() {
            line.clear();
            if let Some(l) = self.labels[r] {
                line.push_str(l.as_str());
            }
            for (spec, col) in self.schema.features().iter().zip(&self.columns) {
                line.push('\t');
                format_value(&mut line, &spec.kind, col[r]);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Read a feature table. Levels not listed in the header become
    /// [`UNSEEN_LEVEL`]. An empty input yields `Ok(None)`.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Option<Dataset>, DatasetError> {
        let mut lines = input.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Ok(None),
                Some((_, line)) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let schema = parse_header(&header)?;
        let p = schema.len();
        let mut columns = vec![Vec::new(); p];
        let mut labels = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != p + 1 {
                return Err(DatasetError::Parse {
                    line: lineno,
                    message: format!("expected {} cells, found {}", p + 1, cells.len()),
                });
            }
            let label = match cells[0].trim() {
                "" => None,
                s => Some(s.parse::<Label>().map_err(|message| DatasetError::Parse { line: lineno, message })?),
            };
            labels.push(label);
            for ((spec, col), cell) in schema.features().iter().zip(columns.iter_mut()).zip(&cells[1..]) {
                let cell = cell.trim();
                let value = match &spec.kind {
                    FeatureKind::Numeric => {
                        let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                            line: lineno,
                            message: format!("`{cell}` is not a number ({})", spec.name),
                        })?;
                        if !v.is_finite() {
                            return Err(DatasetError::Parse {
                                line: lineno,
                                message: format!("non-finite value for {}", spec.name),
                            });
                        }
                        v
                    }
                    FeatureKind::Categorical { levels } => {
                        levels.iter().position(|l| l == cell).map_or(UNSEEN_LEVEL, |p| p as f64)
                    }
                };
                col.push(value);
            }
        }
        Ok(Some(Dataset { schema, columns, labels }))
    }
}

fn format_value(out: &mut String, kind: &FeatureKind, value: f64) {
    match kind {
        FeatureKind::Numeric => {
            let _ = write!(out, "{value}");
        }
        FeatureKind::Categorical { levels } => {
            if let Some(level) = level_code(value).and_then(|c| levels.get(c)) {
                out.push_str(level);
            }
        }
    }
}

pub fn header_cell(spec: &FeatureSpec) -> String {
    let kind = match &spec.kind {
        FeatureKind::Numeric => "num".to_string(),
        FeatureKind::Categorical { levels } => format!("cat({})", levels.join("|")),
    };
    format!("{}:{}:{}", spec.name, kind, spec.group.tag())
}

fn parse_header(header: &str) -> Result<FeatureSchema, DatasetError> {
    let bad = |message: String| DatasetError::Parse { line: 1, message };
    let mut cells = header.split('\t');
    if cells.next().map(str::trim) != Some("label") {
        return Err(bad("first header cell must be `label`".into()));
    }
    let mut features = Vec::new();
    for cell in cells {
        let cell = cell.trim();
        let (name, rest) = cell.split_once(':').ok_or_else(|| bad(format!("malformed header cell `{cell}`")))?;
        let (kind, group) = rest.rsplit_once(':').ok_or_else(|| bad(format!("malformed header cell `{cell}`")))?;
        let group = FeatureGroup::from_tag(group).ok_or_else(|| bad(format!("unknown group in `{cell}`")))?;
        let kind = if kind == "num" {
            FeatureKind::Numeric
        } else if let Some(levels) = kind.strip_prefix("cat(").and_then(|k| k.strip_suffix(')')) {
            let levels = if levels.is_empty() { Vec::new() } else { levels.split('|').map(String::from).collect() };
            FeatureKind::Categorical { levels }
        } else {
            return Err(bad(format!("unknown kind in `{cell}`")));
        };
        features.push(FeatureSpec { name: name.to_string(), kind, group });
    }
    Ok(FeatureSchema::new(features)?)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
