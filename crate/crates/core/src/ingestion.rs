//! Contract and corrupt-registry file loading, curation, currency
//! conversion and C/NC labeling.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{normalize_string, validate_record, ContractField, ContractRecord, Label, RawRow};

/// Curation aborts when more than this fraction of rows is rejected.
pub const MAX_REJECT_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("{path}: unreadable header")]
    UnreadableHeader { path: PathBuf },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("no conversion factor for year {0}")]
    MissingYearFactor(i32),
    #[error("{rejected} of {total} rows rejected, above the {max_percent}% limit; check the column mapping")]
    TooManyRejects { rejected: usize, total: usize, max_percent: f64, report: CurationReport },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Maps each contract field to the header name used in the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap(pub BTreeMap<ContractField, String>);

impl Default for ColumnMap {
    /// Every field read from a column of the same name.
    fn default() -> Self {
        ColumnMap(ContractField::ALL.iter().map(|&f| (f, f.name().to_string())).collect())
    }
}

impl ColumnMap {
    pub fn column(&self, field: ContractField) -> &str {
        self.0.get(&field).map(String::as_str).unwrap_or_else(|| field.name())
    }
}

/// Per-year multiplier applied to spending. Empty means no conversion.
pub type PppTable = BTreeMap<i32, f64>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CurationReport {
    pub total_rows: usize,
    pub accepted: usize,
    /// Rejection counts keyed by reason, including `ParseError`.
    pub rejected: BTreeMap<String, usize>,
}

impl CurationReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn reject_fraction(&self) -> f64 {
        if self.total_rows == 0 {
            0.0
        } else {
            self.rejected_total() as f64 / self.total_rows as f64
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("item\tcount\n");
        out.push_str(&format!("total_rows\t{}\naccepted\t{}\n", self.total_rows, self.accepted));
        for (reason, n) in &self.rejected {
            out.push_str(&format!("rejected:{reason}\t{n}\n"));
        }
        out
    }
}

/// Raw rows of a contracts file, each with its 1-based line number.
#[derive(Debug, Clone, Default)]
pub struct ParsedContracts {
    pub rows: Vec<(usize, RawRow)>,
    /// Line numbers of malformed lines.
    pub parse_errors: Vec<usize>,
}

impl ParsedContracts {
    /// Report skeleton counting parse errors only.
    pub fn report(&self) -> CurationReport {
        let mut rejected = BTreeMap::new();
        if !self.parse_errors.is_empty() {
            rejected.insert("ParseError".to_string(), self.parse_errors.len());
        }
        CurationReport { total_rows: self.rows.len() + self.parse_errors.len(), accepted: 0, rejected }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::FileNotFound(path.to_path_buf()),
        _ => IngestError::Io { path: path.to_path_buf(), source: e },
    })
}

fn split_header(header: &str, delimiter: u8) -> Vec<String> {
    header.split(delimiter as char).map(|c| c.trim().trim_matches('"').trim().to_string()).collect()
}

/// Pick comma or tab from the header line. When both occur, the delimiter
/// whose split yields every wanted column wins.
fn detect_delimiter(path: &Path, header: &str, wanted: &[&str]) -> Result<u8, IngestError> {
    let tabs = header.matches('\t').count();
    let commas = header.matches(',').count();
    match (tabs > 0, commas > 0) {
        (true, false) => Ok(b'\t'),
        (false, true) | (false, false) => Ok(b','),
        (true, true) => {
            let fits = |d: u8| {
                let cells = split_header(header, d);
                wanted.iter().all(|w| cells.iter().any(|c| c == w))
            };
            match (fits(b'\t'), fits(b',')) {
                (true, false) => Ok(b'\t'),
                (false, true) => Ok(b','),
                _ => Err(IngestError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "ambiguous delimiter: header contains both tabs and commas".into(),
                }),
            }
        }
    }
}

struct Table {
    header: Vec<String>,
    /// (line number, cells) or the line number of a malformed record.
    records: Vec<Result<(usize, Vec<String>), usize>>,
}

fn read_table(path: &Path, wanted: &[&str]) -> Result<Table, IngestError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let first = text.lines().next().unwrap_or("");
    if first.trim().is_empty() {
        return Err(IngestError::UnreadableHeader { path: path.to_path_buf() });
    }
    let delimiter = detect_delimiter(path, first, wanted)?;
    let mut reader =
        csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|_| IngestError::UnreadableHeader { path: path.to_path_buf() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let width = header.len();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Position is unavailable on some errors; fall back to ordinal + 2.
        match rec {
            Ok(r) => {
                let line = r.position().map_or(i + 2, |p| p.line() as usize);
                if r.len() != width {
                    records.push(Err(line));
                } else {
                    records.push(Ok((line, r.iter().map(String::from).collect())));
                }
            }
            Err(e) => {
                let line = e.position().map_or(i + 2, |p| p.line() as usize);
                records.push(Err(line));
            }
        }
    }
    Ok(Table { header, records })
}

/// Read a delimited contracts file into raw field maps. Malformed lines
/// are counted rather than fatal.
pub fn parse_contracts(path: &Path, columns: &ColumnMap) -> Result<ParsedContracts, IngestError> {
    let wanted: Vec<&str> = ContractField::ALL.iter().map(|&f| columns.column(f)).collect();
    let table = read_table(path, &wanted)?;
    let mut positions = Vec::with_capacity(ContractField::ALL.len());
    for (&field, name) in ContractField::ALL.iter().zip(&wanted) {
        let pos = table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })?;
        positions.push((field, pos));
    }
    let mut parsed = ParsedContracts::default();
    for rec in table.records {
        match rec {
            Ok((line, cells)) => {
                let row = positions.iter().map(|&(f, p)| (f, cells[p].clone())).collect();
                parsed.rows.push((line, row));
            }
            Err(line) => parsed.parse_errors.push(line),
        }
    }
    Ok(parsed)
}

/// Validate every parsed row. Fails when the reject rate exceeds
/// [`MAX_REJECT_FRACTION`]; the error carries the full report.
pub fn curate(parsed: &ParsedContracts) -> Result<(Vec<ContractRecord>, CurationReport), IngestError> {
    let mut report = parsed.report();
    let results: Vec<_> = parsed.rows.par_iter().map(|(_, row)| validate_record(row)).collect();
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(why) => *report.rejected.entry(why.kind()).or_default() += 1,
        }
    }
    report.accepted = records.len();
    if report.reject_fraction() > MAX_REJECT_FRACTION {
        return Err(IngestError::TooManyRejects {
            rejected: report.rejected_total(),
            total: report.total_rows,
            max_percent: MAX_REJECT_FRACTION * 100.0,
            report,
        });
    }
    Ok((records, report))
}

/// Multiply spending by the factor for the record's start year.
pub fn convert_spending(record: &ContractRecord, ppp: &PppTable) -> Result<ContractRecord, IngestError> {
    if ppp.is_empty() {
        return Ok(record.clone());
    }
    let year = record.year();
    let factor = ppp.get(&year).ok_or(IngestError::MissingYearFactor(year))?;
    Ok(ContractRecord { spending: record.spending * factor, ..record.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    TaxAgency,
    OpenData,
    Both,
}

impl SourceTag {
    fn merge(self, other: SourceTag) -> SourceTag {
        if self == other {
            self
        } else {
            SourceTag::Both
        }
    }
}

/// One registry input file. Without `column`, every non-empty line is a name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySource {
    pub path: PathBuf,
    pub source: SourceTag,
    #[serde(default)]
    pub column: Option<String>,
}

/// Normalized names of listed suppliers with their merged source tags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorruptRegistry {
    names: HashMap<String, SourceTag>,
}

impl CorruptRegistry {
    pub fn insert(&mut self, raw_name: &str, tag: SourceTag) {
        let name = normalize_string(raw_name);
        if name.is_empty() {
            return;
        }
        self.names.entry(name).and_modify(|t| *t = t.merge(tag)).or_insert(tag);
    }

    /// Membership of an already-normalized supplier id.
    pub fn contains(&self, supplier_id: &str) -> bool {
        self.names.contains_key(supplier_id)
    }

    pub fn source(&self, supplier_id: &str) -> Option<SourceTag> {
        self.names.get(supplier_id).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryWarning {
    EmptyRegistry,
}

/// Union of all registry files after name normalization.
pub fn load_corrupt_registry(
    sources: &[RegistrySource],
) -> Result<(CorruptRegistry, Option<RegistryWarning>), IngestError> {
    let mut registry = CorruptRegistry::default();
    for src in sources {
        match &src.column {
            Some(column) => {
                let table = read_table(&src.path, &[column.as_str()])?;
                let pos = table
                    .header
                    .iter()
                    .position(|h| h == column)
                    .ok_or_else(|| IngestError::MissingColumn { path: src.path.clone(), column: column.clone() })?;
                for (_, cells) in table.records.into_iter().flatten() {
                    registry.insert(&cells[pos], src.source);
                }
            }
            None => {
                let reader = BufReader::new(open(&src.path)?);
                for line in reader.lines() {
                    let line = line.map_err(|e| IngestError::Io { path: src.path.clone(), source: e })?;
                    registry.insert(line.trim_start_matches('\u{feff}'), src.source);
                }
            }
        }
    }
    let warning = registry.is_empty().then_some(RegistryWarning::EmptyRegistry);
    Ok((registry, warning))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledContract {
    pub record: ContractRecord,
    pub label: Label,
}

/// C iff the supplier is listed, regardless of contract dates.
pub fn label_dataset(records: Vec<ContractRecord>, registry: &CorruptRegistry) -> Vec<LabeledContract> {
    records
        .into_par_iter()
        .map(|record| {
            let label = if registry.contains(&record.supplier_id) { Label::C } else { Label::NC };
            LabeledContract { record, label }
        })
        .collect()
}
