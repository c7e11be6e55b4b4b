//! Domain types shared across the pipeline: contract records, labels,
//! feature schemas, plus record validation and string normalization.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Binary class of a contract. `NC` (non-corrupt) is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    C,
    NC,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::NC
    }

    /// Index used by per-class count arrays: `C = 0`, `NC = 1`.
    pub fn index(self) -> usize {
        match self {
            Label::C => 0,
            Label::NC => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::C => "C",
            Label::NC => "NC",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "C" => Ok(Label::C),
            "NC" => Ok(Label::NC),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

macro_rules! code_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $code:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> &'static str {
                match self {
                    $($name::$variant => $code),+
                }
            }

            pub fn from_code(code: &str) -> Option<Self> {
                match code {
                    $($code => Some($name::$variant),)+
                    _ => None,
                }
            }

            /// All codes in declaration order.
            pub fn codes() -> Vec<String> {
                Self::ALL.iter().map(|v| v.code().to_string()).collect()
            }
        }
    };
}

code_enum!(
    /// Level of government placing the order.
    GovernmentOrder { Federal => "APF", State => "GE", Municipal => "GM" }
);
code_enum!(
    /// National, international, or international-under-trade-agreement procedure.
    ProcedureCharacter { National => "N", International => "I", TradeAgreement => "ITLC" }
);
code_enum!(
    ContractType {
        PublicWorks => "OP",
        Services => "S",
        Acquisition => "ADQ",
        Lease => "AR",
        WorksRelatedServices => "SLAOP",
    }
);
code_enum!(
    ProcedureType { SingleBidder => "AD", OpenContest => "LP", ThreeSupplierContest => "I3P" }
);
code_enum!(
    SupplierSize { Micro => "MIC", Small => "PEQ", Medium => "MED", Large => "NOM", Unassigned => "NA" }
);

/// One curated contract row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub buyer_id: String,
    pub supplier_id: String,
    pub government_order: GovernmentOrder,
    pub procedure_character: ProcedureCharacter,
    pub contract_type: ContractType,
    pub procedure_type: ProcedureType,
    pub supplier_size: SupplierSize,
    pub start_date: NaiveDate,
    pub beginning_week: u32,
    pub ending_week: u32,
    pub spending: f64,
}

impl ContractRecord {
    pub fn year(&self) -> i32 {
        self.start_date.year()
    }

    /// Contract duration in whole weeks. A contract whose ending week is
    /// earlier than its beginning week is taken to end in the following year.
    pub fn duration_weeks(&self) -> u32 {
        if self.ending_week >= self.beginning_week {
            self.ending_week - self.beginning_week
        } else {
            self.ending_week + iso_weeks_in_year(self.year()) - self.beginning_week
        }
    }
}

/// 52 or 53, following ISO-8601 week numbering.
pub fn iso_weeks_in_year(year: i32) -> u32 {
    NaiveDate::from_ymd_opt(year, 12, 28).map(|d| d.iso_week().week()).unwrap_or(52)
}

/// Uppercase, strip accents, drop punctuation, collapse whitespace, trim.
pub fn normalize_string(raw: &str) -> String {
    let upper = raw.to_uppercase();
    let mut out = String::with_capacity(upper.len());
    let mut pending_space = false;
    for c in upper.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if !c.is_alphanumeric() {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        // Some characters (e.g. the long s) only reach their final uppercase
        // form after decomposition.
        out.extend(c.to_uppercase());
    }
    out
}

/// Fields of a [`ContractRecord`], in validation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractField {
    BuyerId,
    SupplierId,
    GovernmentOrder,
    ProcedureCharacter,
    ContractType,
    ProcedureType,
    SupplierSize,
    StartDate,
    BeginningWeek,
    EndingWeek,
    Spending,
}

impl ContractField {
    pub const ALL: [ContractField; 11] = [
        ContractField::BuyerId,
        ContractField::SupplierId,
        ContractField::GovernmentOrder,
        ContractField::ProcedureCharacter,
        ContractField::ContractType,
        ContractField::ProcedureType,
        ContractField::SupplierSize,
        ContractField::StartDate,
        ContractField::BeginningWeek,
        ContractField::EndingWeek,
        ContractField::Spending,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContractField::BuyerId => "buyer_id",
            ContractField::SupplierId => "supplier_id",
            ContractField::GovernmentOrder => "government_order",
            ContractField::ProcedureCharacter => "procedure_character",
            ContractField::ContractType => "contract_type",
            ContractField::ProcedureType => "procedure_type",
            ContractField::SupplierSize => "supplier_size",
            ContractField::StartDate => "start_date",
            ContractField::BeginningWeek => "beginning_week",
            ContractField::EndingWeek => "ending_week",
            ContractField::Spending => "spending",
        }
    }
}

impl fmt::Display for ContractField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One parsed input line, keyed by [`ContractField`].
pub type RawRow = BTreeMap<ContractField, String>;

/// Why a row was dropped during curation. Only the first offending field is named.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("missing field {0}")]
    MissingField(ContractField),
    #[error("bad categorical code `{value}` for {field}")]
    BadCategoricalCode { field: ContractField, value: String },
    #[error("negative spending")]
    NegativeSpending,
    #[error("unparseable number for {0}")]
    BadNumber(ContractField),
    #[error("week out of range for {0}")]
    BadWeek(ContractField),
    #[error("bad date `{0}`")]
    BadDate(String),
}

impl Rejection {
    /// Stable short key used by curation reports.
    pub fn kind(&self) -> String {
        match self {
            Rejection::MissingField(f) => format!("MissingField({f})"),
            Rejection::BadCategoricalCode { field, .. } => format!("BadCategoricalCode({field})"),
            Rejection::NegativeSpending => "NegativeSpending".to_string(),
            Rejection::BadNumber(f) => format!("BadNumber({f})"),
            Rejection::BadWeek(f) => format!("BadWeek({f})"),
            Rejection::BadDate(_) => "BadDate".to_string(),
        }
    }
}

const DATE_FORMATS: [&str; 3] = ["%Y-%m-%d", "%d/%m/%Y", "%Y/%m/%d"];

fn parse_date(raw: &str) -> Option<NaiveDate> {
    // Timestamps such as "2015-03-02 00:00:00" keep only the date part.
    let day = raw.split_whitespace().next()?;
    let day = day.split('T').next()?;
    DATE_FORMATS.iter().find_map(|fmt| NaiveDate::parse_from_str(day, fmt).ok())
}

/// Check one raw row against every [`ContractRecord`] invariant.
pub fn validate_record(row: &RawRow) -> Result<ContractRecord, Rejection> {
    let field = |f: ContractField| -> Result<&str, Rejection> {
        match row.get(&f).map(|v| v.trim()) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Rejection::MissingField(f)),
        }
    };
    let ident = |f: ContractField| -> Result<String, Rejection> {
        let v = normalize_string(field(f)?);
        if v.is_empty() {
            Err(Rejection::MissingField(f))
        } else {
            Ok(v)
        }
    };
    fn code<T>(f: ContractField, raw: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, Rejection> {
        parse(&normalize_string(raw)).ok_or_else(|| Rejection::BadCategoricalCode { field: f, value: raw.to_string() })
    }
    let week = |f: ContractField| -> Result<u32, Rejection> {
        let raw = field(f)?;
        let value: f64 = raw.parse().map_err(|_| Rejection::BadWeek(f))?;
        if value.fract() != 0.0 || !(1.0..=53.0).contains(&value) {
            return Err(Rejection::BadWeek(f));
        }
        Ok(value as u32)
    };

    let buyer_id = ident(ContractField::BuyerId)?;
    let supplier_id = ident(ContractField::SupplierId)?;
    let government_order =
        code(ContractField::GovernmentOrder, field(ContractField::GovernmentOrder)?, GovernmentOrder::from_code)?;
    let procedure_character = code(
        ContractField::ProcedureCharacter,
        field(ContractField::ProcedureCharacter)?,
        ProcedureCharacter::from_code,
    )?;
    let contract_type =
        code(ContractField::ContractType, field(ContractField::ContractType)?, ContractType::from_code)?;
    let procedure_type =
        code(ContractField::ProcedureType, field(ContractField::ProcedureType)?, ProcedureType::from_code)?;
    let supplier_size =
        code(ContractField::SupplierSize, field(ContractField::SupplierSize)?, SupplierSize::from_code)?;
    let raw_date = field(ContractField::StartDate)?;
    let start_date = parse_date(raw_date).ok_or_else(|| Rejection::BadDate(raw_date.to_string()))?;
    let beginning_week = week(ContractField::BeginningWeek)?;
    let ending_week = week(ContractField::EndingWeek)?;
    let spending: f64 =
        field(ContractField::Spending)?.parse().map_err(|_| Rejection::BadNumber(ContractField::Spending))?;
    if !spending.is_finite() {
        return Err(Rejection::BadNumber(ContractField::Spending));
    }
    if spending < 0.0 {
        return Err(Rejection::NegativeSpending);
    }

    Ok(ContractRecord {
        buyer_id,
        supplier_id,
        government_order,
        procedure_character,
        contract_type,
        procedure_type,
        supplier_size,
        start_date,
        beginning_week,
        ending_week,
        spending,
    })
}

/// Maximum number of levels a categorical feature may carry; split rules
/// keep level sets in a 64-bit mask.
pub const MAX_CATEGORICAL_LEVELS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

impl FeatureKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, FeatureKind::Categorical { .. })
    }
}

/// Descriptive family a feature belongs to: contract attributes (i),
/// buyer/supplier relationship (ii), buyer maxima (iii), risk factors (iv).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    Contract,
    Relationship,
    Buyer,
    Risk,
    Other,
}

impl FeatureGroup {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureGroup::Contract => "i",
            FeatureGroup::Relationship => "ii",
            FeatureGroup::Buyer => "iii",
            FeatureGroup::Risk => "iv",
            FeatureGroup::Other => "-",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "i" => FeatureGroup::Contract,
            "ii" => FeatureGroup::Relationship,
            "iii" => FeatureGroup::Buyer,
            "iv" => FeatureGroup::Risk,
            "-" => FeatureGroup::Other,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
}

impl FeatureSpec {
    pub fn numeric(name: &str, group: FeatureGroup) -> Self {
        FeatureSpec { name: name.to_string(), kind: FeatureKind::Numeric, group }
    }

    pub fn categorical(name: &str, group: FeatureGroup, levels: Vec<String>) -> Self {
        FeatureSpec { name: name.to_string(), kind: FeatureKind::Categorical { levels }, group }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
    #[error("feature `{name}` has {levels} levels; at most {max} are supported")]
    TooManyLevels { name: String, levels: usize, max: usize },
    #[error("feature `{0}` has a duplicate or empty level")]
    BadLevels(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

/// Ordered feature list; the order is the column order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateName(f.name.clone()));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.len() > MAX_CATEGORICAL_LEVELS {
                    return Err(SchemaError::TooManyLevels {
                        name: f.name.clone(),
                        levels: levels.len(),
                        max: MAX_CATEGORICAL_LEVELS,
                    });
                }
                let distinct: HashSet<_> = levels.iter().collect();
                if distinct.len() != levels.len() || levels.iter().any(|l| l.is_empty()) {
                    return Err(SchemaError::BadLevels(f.name.clone()));
                }
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn get(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Sub-schema keeping `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema { features: indices.iter().map(|&i| self.features[i].clone()).collect() }
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.features[i].kind.is_categorical()).collect()
    }

    /// The 19-column contract feature layout: 5 categorical contract
    /// attributes followed by 14 numeric features.
    pub fn contract_features() -> FeatureSchema {
        use FeatureGroup::*;
        let features = vec![
            FeatureSpec::categorical("GO", Contract, GovernmentOrder::codes()),
            FeatureSpec::categorical("PC", Contract, ProcedureCharacter::codes()),
            FeatureSpec::categorical("CT", Contract, ContractType::codes()),
            FeatureSpec::categorical("PT", Contract, ProcedureType::codes()),
            FeatureSpec::categorical("S", Contract, SupplierSize::codes()),
            FeatureSpec::numeric("BeginningWeek", Contract),
            FeatureSpec::numeric("EndingWeek", Contract),
            FeatureSpec::numeric("EBWeeks", Contract),
            FeatureSpec::numeric("Spending", Contract),
            FeatureSpec::numeric("T.Cont", Relationship),
            FeatureSpec::numeric("T.Spending", Relationship),
            FeatureSpec::numeric("T.AD", Relationship),
            FeatureSpec::numeric("ActiveWeeks", Relationship),
            FeatureSpec::numeric("T.Cont.Max", Buyer),
            FeatureSpec::numeric("T.Spending.Max", Buyer),
            FeatureSpec::numeric("RAD", Risk),
            FeatureSpec::numeric("Fav", Risk),
            FeatureSpec::numeric("CPW", Risk),
            FeatureSpec::numeric("SPW", Risk),
        ];
        FeatureSchema::new(features).expect("static schema is valid")
    }
}
