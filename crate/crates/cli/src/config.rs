//! TOML pipeline configuration.
//!
//! ```toml
//! seed = 7
//! out_dir = "out"
//! dataset = "out/features.tsv"
//!
//! [input]
//! contracts = "contracts.csv"
//! ppp = { 2015 = 0.118, 2016 = 0.113 }
//! columns = { supplier_id = "proveedor" }
//!
//! [[input.registries]]
//! path = "sat_69b.csv"
//! source = "tax-agency"
//! column = "nombre"
//!
//! [split]
//! train = 0.5
//! calibration = 0.2
//! test = 0.3
//!
//! [forest]
//! n_trees = 500
//! min_node_size = 1
//!
//! [synth]
//! n_rows = 9200
//! ratio = 45.0
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hyperforest::contracts::ContractField;
use hyperforest::forest::ForestParams;
use hyperforest::ingestion::{ColumnMap, PppTable, RegistrySource};
use hyperforest::splitter::SplitSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::synth::SynthParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Labeled feature table; defaults to `<out_dir>/features.tsv`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub synth: SynthParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default)]
    pub contracts: Option<PathBuf>,
    /// Header names for fields whose column is not named after the field.
    #[serde(default)]
    pub columns: BTreeMap<ContractField, String>,
    #[serde(default)]
    pub registries: Vec<RegistrySource>,
    /// Spending multiplier per contract year. Empty keeps raw amounts.
    #[serde(default)]
    pub ppp: BTreeMap<String, f64>,
}

impl InputConfig {
    pub fn column_map(&self) -> ColumnMap {
        let mut map = ColumnMap::default();
        map.0.extend(self.columns.iter().map(|(&f, c)| (f, c.clone())));
        map
    }

    pub fn ppp_table(&self) -> Result<PppTable, CliError> {
        self.ppp
            .iter()
            .map(|(year, factor)| {
                let y: i32 = year.parse().map_err(|_| CliError::Config(format!("ppp key `{year}` is not a year")))?;
                if !factor.is_finite() || *factor <= 0.0 {
                    return Err(CliError::Config(format!("ppp factor for {year} must be positive")));
                }
                Ok((y, *factor))
            })
            .collect()
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = &mut self.dataset {
            fix(p);
        }
        if let Some(p) = &mut self.input.contracts {
            fix(p);
        }
        for r in &mut self.input.registries {
            fix(&mut r.path);
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out_dir.join("features.tsv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join("model.json")
    }

    /// Every input file the ingest step reads must exist up front.
    pub fn check_ingest_inputs(&self) -> Result<(), CliError> {
        let contracts =
            self.input.contracts.as_ref().ok_or_else(|| CliError::Config("input.contracts is not set".into()))?;
        for path in std::iter::once(contracts).chain(self.input.registries.iter().map(|r| &r.path)) {
            if !path.is_file() {
                return Err(CliError::missing(path));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperforest::ingestion::SourceTag;

    #[test]
    fn full_config() {
        let text = r#"
seed = 11
out_dir = "run"

[input]
contracts = "c.csv"
ppp = { 2015 = 0.5 }
columns = { supplier_id = "proveedor" }

[[input.registries]]
path = "/abs/r.txt"
source = "open-data"

[forest]
n_trees = 40
"#;
        let cfg = PipelineConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.out_dir, PathBuf::from("/base/run"));
        assert_eq!(cfg.input.contracts, Some(PathBuf::from("/base/c.csv")));
        assert_eq!(cfg.input.registries[0].path, PathBuf::from("/abs/r.txt"));
        assert_eq!(cfg.input.registries[0].source, SourceTag::OpenData);
        assert_eq!(cfg.input.ppp_table().unwrap()[&2015], 0.5);
        assert_eq!(cfg.input.column_map().column(ContractField::SupplierId), "proveedor");
        assert_eq!(cfg.input.column_map().column(ContractField::BuyerId), "buyer_id");
        assert_eq!(cfg.forest.n_trees, 40);
        assert_eq!(cfg.split, SplitSpec::default());
        assert_eq!(cfg.dataset_path(), PathBuf::from("/base/run/features.tsv"));
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(PipelineConfig::parse("out_dir = \"x\"", Path::new(".")), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 1\nout_dir = \"x\"\ncolour = 3\n";
        assert!(matches!(PipelineConfig::parse(text, Path::new(".")), Err(CliError::Config(_))));
        let nested = "seed = 1\nout_dir = \"x\"\n[forest]\ntrees = 3\n";
        assert!(matches!(PipelineConfig::parse(nested, Path::new(".")), Err(CliError::Config(_))));
    }

    #[test]
    fn bad_split_and_ppp() {
        let text = "seed = 1\nout_dir = \"x\"\n[split]\ntrain = 0.9\ncalibration = 0.2\ntest = 0.3\n";
        assert!(matches!(PipelineConfig::parse(text, Path::new(".")), Err(CliError::Config(_))));
        let text = "seed = 1\nout_dir = \"x\"\n[input]\nppp = { twenty = 1.0 }\n";
        let cfg = PipelineConfig::parse(text, Path::new(".")).unwrap();
        assert!(cfg.input.ppp_table().is_err());
    }
}
