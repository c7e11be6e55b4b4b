//! Random forest of unpruned Gini trees grown on bootstrap samples, with
//! out-of-bag bookkeeping for permutation importance.

mod importance;
pub mod split;
pub mod tree;

pub use importance::{permutation_importance, ImportanceVector};
pub use split::{find_best_split, gini_impurity, SplitRule, SplitScore};
pub use tree::{grow_tree, majority_label, DecisionTree, TreeNode, TreeParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{FeatureKind, FeatureSchema, Label};
use crate::dataset::{level_code, Dataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("node has no rows")]
    EmptyNode,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("training row {0} has no label")]
    UnlabeledRow(usize),
    #[error("row {row} has an invalid level for categorical feature `{feature}`")]
    InvalidLevel { feature: String, row: usize },
    #[error("row has {got} features, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("no tree has out-of-bag rows")]
    NoOobRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// Defaults to `floor(sqrt(p))`.
    #[serde(default)]
    pub features_per_split: Option<usize>,
    #[serde(default = "default_min_node_size")]
    pub min_node_size: usize,
}

fn default_trees() -> usize {
    500
}

fn default_min_node_size() -> usize {
    1
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: default_trees(), features_per_split: None, min_node_size: default_min_node_size() }
    }
}

impl ForestParams {
    pub fn with_trees(n_trees: usize) -> Self {
        ForestParams { n_trees, ..Default::default() }
    }

    /// Tree parameters for `p` features.
    pub fn resolve(&self, p: usize) -> Result<TreeParams, ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("tree count must be at least 1".into()));
        }
        if p == 0 {
            return Err(ForestError::InvalidParams("no features".into()));
        }
        let mtry = self.features_per_split.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1));
        if mtry == 0 || mtry > p {
            return Err(ForestError::InvalidParams(format!("features per split {mtry} outside [1, {p}]")));
        }
        Ok(TreeParams { features_per_split: mtry, min_node_size: self.min_node_size.max(1) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
    /// Out-of-bag dataset rows of each tree, sorted.
    oob: Vec<Vec<u32>>,
    schema: FeatureSchema,
    tree_params: TreeParams,
    seed: u64,
}

/// Class indices (`C = 0`, `NC = 1`) of every dataset row, checking that
/// every row in `rows` is labeled and carries valid categorical levels.
pub(crate) fn training_labels(data: &Dataset, rows: &[usize]) -> Result<Vec<u8>, ForestError> {
    let labels: Vec<u8> = data.labels().iter().map(|l| l.map_or(0, |l| l.index() as u8)).collect();
    let categorical: Vec<(usize, usize, &str)> = data
        .schema()
        .features()
        .iter()
        .enumerate()
        .filter_map(|(i, f)| match &f.kind {
            FeatureKind::Categorical { levels } => Some((i, levels.len(), f.name.as_str())),
            FeatureKind::Numeric => None,
        })
        .collect();
    for &r in rows {
        if data.label(r).is_none() {
            return Err(ForestError::UnlabeledRow(r));
        }
        for &(f, n_levels, name) in &categorical {
            if !level_code(data.value(r, f)).is_some_and(|c| c < n_levels) {
                return Err(ForestError::InvalidLevel { feature: name.to_string(), row: r });
            }
        }
    }
    Ok(labels)
}

/// Train `params.n_trees` trees, tree `t` on a bootstrap of `rows` drawn
/// with seed `seed + t`. Trees are grown in parallel; the result does not
/// depend on the thread count.
pub fn train_forest(
    data: &Dataset,
    rows: &[usize],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    if rows.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    let tree_params = params.resolve(data.n_features())?;
    let labels = training_labels(data, rows)?;
    let n = rows.len();
    let grown: Vec<(DecisionTree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut in_bag = vec![false; n];
            let sample: Vec<usize> = (0..n)
                .map(|_| {
                    let pos = rng.gen_range(0..n);
                    in_bag[pos] = true;
                    rows[pos]
                })
                .collect();
            let mut oob: Vec<u32> = (0..n).filter(|&pos| !in_bag[pos]).map(|pos| rows[pos] as u32).collect();
            oob.sort_unstable();
            oob.dedup();
            (grow_tree(data, &labels, &sample, &tree_params, &mut rng), oob)
        })
        .collect();
    let (trees, oob) = grown.into_iter().unzip();
    Ok(ForestModel { trees, oob, schema: data.schema().clone(), tree_params, seed })
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn oob_rows(&self, tree: usize) -> &[u32] {
        &self.oob[tree]
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn tree_params(&self) -> TreeParams {
        self.tree_params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of trees voting NC.
    #[inline]
    pub fn nc_votes_with(&self, value: impl Fn(usize) -> f64 + Copy) -> usize {
        self.trees.iter().filter(|t| t.predict_with(value) == Label::NC).count()
    }

    fn check_width(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.schema.len() {
            return Err(ForestError::SchemaMismatch { expected: self.schema.len(), got: row.len() });
        }
        Ok(())
    }

    /// Fraction of trees voting NC.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ForestError> {
        self.check_width(row)?;
        Ok(self.nc_votes_with(|f| row[f]) as f64 / self.trees.len() as f64)
    }

    /// Tree-majority label; an even split goes to NC.
    pub fn predict_label(&self, row: &[f64]) -> Result<Label, ForestError> {
        self.check_width(row)?;
        Ok(self.label_from_votes(self.nc_votes_with(|f| row[f])))
    }

    pub fn label_from_votes(&self, nc_votes: usize) -> Label {
        if 2 * nc_votes >= self.trees.len() {
            Label::NC
        } else {
            Label::C
        }
    }

    /// Majority label for a dataset row; the dataset must use this model's schema.
    pub fn predict_row(&self, data: &Dataset, row: usize) -> Label {
        self.label_from_votes(self.nc_votes_with(|f| data.value(row, f)))
    }

    /// NC tree votes for each of `rows`, walking one tree over all rows at a time.
    pub fn nc_votes_rows(&self, data: &Dataset, rows: &[usize]) -> Vec<usize> {
        let columns: Vec<&[f64]> = (0..data.n_features()).map(|f| data.column(f)).collect();
        let mut votes = vec![0; rows.len()];
        for tree in &self.trees {
            for (v, &r) in votes.iter_mut().zip(rows) {
                if tree.predict_with(|f| columns[f][r]) == Label::NC {
                    *v += 1;
                }
            }
        }
        votes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{FeatureGroup, FeatureSpec};

    fn planted(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = FeatureSchema::new(vec![
            FeatureSpec::numeric("signal", FeatureGroup::Risk),
            FeatureSpec::numeric("noise", FeatureGroup::Other),
        ])
        .unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let nc = i % 2 == 0;
            rows.push(vec![if nc { 1.0 } else { 0.0 } + rng.gen_range(0.0..0.1), rng.gen_range(0.0..1.0)]);
            labels.push(if nc { Label::NC } else { Label::C });
        }
        Dataset::from_rows(schema, &rows, &labels)
    }

    #[test]
    fn params_resolution() {
        assert_eq!(ForestParams::default().resolve(19).unwrap().features_per_split, 4);
        assert_eq!(ForestParams::default().resolve(1).unwrap().features_per_split, 1);
        assert!(ForestParams::with_trees(0).resolve(3).is_err());
        let too_many = ForestParams { features_per_split: Some(4), ..Default::default() };
        assert!(too_many.resolve(3).is_err());
    }

    #[test]
    fn single_tree_oob_fraction() {
        // Expected out-of-bag share (1 - 1/n)^n, about 0.366 for n = 100.
        let ds = planted(100, 1);
        let rows: Vec<usize> = (0..100).collect();
        let expected = (1.0 - 1.0 / 100.0f64).powi(100);
        let mean: f64 = (0..200)
            .map(|s| {
                let m = train_forest(&ds, &rows, &ForestParams::with_trees(1), s).unwrap();
                m.oob_rows(0).len() as f64 / 100.0
            })
            .sum::<f64>()
            / 200.0;
        assert!((mean - expected).abs() < 0.03, "mean oob fraction {mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = planted(60, 2);
        let rows: Vec<usize> = (0..60).collect();
        let a = train_forest(&ds, &rows, &ForestParams::with_trees(20), 9).unwrap();
        let b = train_forest(&ds, &rows, &ForestParams::with_trees(20), 9).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&ds, &rows, &ForestParams::with_trees(20), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn duplicate_rows_are_fine() {
        let ds = planted(10, 3);
        let rows = vec![0, 0, 1, 1, 2, 3, 3, 3];
        let m = train_forest(&ds, &rows, &ForestParams::with_trees(5), 1).unwrap();
        assert_eq!(m.n_trees(), 5);
    }

    #[test]
    fn vote_fraction_and_ties() {
        let ds = planted(40, 4);
        let rows: Vec<usize> = (0..40).collect();
        let params = ForestParams { features_per_split: Some(2), ..ForestParams::with_trees(50) };
        let m = train_forest(&ds, &rows, &params, 1).unwrap();
        assert_eq!(m.predict_proba(&[1.05, 0.5]).unwrap(), 1.0);
        assert_eq!(m.predict_proba(&[0.05, 0.5]).unwrap(), 0.0);
        assert_eq!(m.predict_label(&[1.05, 0.5]).unwrap(), Label::NC);
        assert_eq!(m.label_from_votes(25), Label::NC);
        assert_eq!(m.label_from_votes(24), Label::C);
        assert!(matches!(m.predict_proba(&[1.0]), Err(ForestError::SchemaMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn tree_order_does_not_change_votes() {
        let ds = planted(40, 5);
        let rows: Vec<usize> = (0..40).collect();
        let m = train_forest(&ds, &rows, &ForestParams::with_trees(15), 2).unwrap();
        let mut reversed = m.clone();
        reversed.trees.reverse();
        reversed.oob.reverse();
        for r in 0..40 {
            let row = ds.row(r);
            assert_eq!(m.predict_proba(&row).unwrap(), reversed.predict_proba(&row).unwrap());
        }
    }

    #[test]
    fn rejects_unlabeled_and_bad_levels() {
        let schema =
            FeatureSchema::new(vec![FeatureSpec::categorical("g", FeatureGroup::Other, vec!["A".into()])]).unwrap();
        let ds = Dataset::new(schema.clone(), vec![vec![0.0, 0.0]], vec![Some(Label::C), None]).unwrap();
        assert_eq!(train_forest(&ds, &[0, 1], &ForestParams::with_trees(1), 0), Err(ForestError::UnlabeledRow(1)));
        let ds = Dataset::new(schema, vec![vec![0.0, f64::NAN]], vec![Some(Label::C), Some(Label::NC)]).unwrap();
        assert!(matches!(
            train_forest(&ds, &[0, 1], &ForestParams::with_trees(1), 0),
            Err(ForestError::InvalidLevel { row: 1, .. })
        ));
        assert_eq!(train_forest(&ds, &[], &ForestParams::with_trees(1), 0), Err(ForestError::EmptyTrainingSet));
    }
}
