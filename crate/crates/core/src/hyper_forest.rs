//! Hyper-forest: one random forest per balanced sub-sample, combined by
//! counting forest votes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{FeatureSchema, Label};
use crate::dataset::Dataset;
use crate::forest::{permutation_importance, train_forest, ForestError, ForestModel, ForestParams, ImportanceVector};
use crate::splitter::BalancedSubsample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HyperForestError {
    #[error("no balanced sub-samples to train on")]
    NoSubsamples,
    #[error("no threshold supplied and none stored in the model")]
    ThresholdUnset,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("forests disagree on the feature schema")]
    InconsistentSchema,
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// `nc_votes` of `total` forests voted NC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub nc_votes: usize,
    pub total: usize,
}

impl VoteTally {
    /// P(NC|x) = V(NC) / T.
    pub fn probability(&self) -> f64 {
        self.nc_votes as f64 / self.total as f64
    }

    /// NC iff the vote share is strictly above `theta`.
    pub fn classify(&self, theta: f64) -> Label {
        if self.probability() > theta {
            Label::NC
        } else {
            Label::C
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub forest_seeds: Vec<u64>,
    pub params: ForestParams,
    /// Rows per sub-sample (C plus NC).
    pub subsample_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperForestModel {
    forests: Vec<ForestModel>,
    schema: FeatureSchema,
    threshold: Option<f64>,
    metadata: TrainingMetadata,
}

/// Seed of forest `index`, decorrelated from neighbouring master seeds.
pub fn forest_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Train one forest per sub-sample. Forests are trained one after another;
/// each parallelizes over its trees.
pub fn train_hyper_forest(
    data: &Dataset,
    subsamples: &[BalancedSubsample],
    params: &ForestParams,
    seed: u64,
) -> Result<HyperForestModel, HyperForestError> {
    if subsamples.is_empty() {
        return Err(HyperForestError::NoSubsamples);
    }
    let forest_seeds: Vec<u64> = (0..subsamples.len()).map(|i| forest_seed(seed, i)).collect();
    let forests = subsamples
        .iter()
        .zip(&forest_seeds)
        .map(|(s, &fs)| train_forest(data, &s.rows(), params, fs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HyperForestModel {
        forests,
        schema: data.schema().clone(),
        threshold: None,
        metadata: TrainingMetadata {
            seed,
            forest_seeds,
            params: *params,
            subsample_sizes: subsamples.iter().map(BalancedSubsample::len).collect(),
        },
    })
}

impl HyperForestModel {
    /// Assemble a model from already trained forests.
    pub fn from_parts(
        forests: Vec<ForestModel>,
        threshold: Option<f64>,
        metadata: TrainingMetadata,
    ) -> Result<Self, HyperForestError> {
        let schema = forests.first().ok_or(HyperForestError::NoSubsamples)?.schema().clone();
        if forests.iter().any(|f| *f.schema() != schema) {
            return Err(HyperForestError::InconsistentSchema);
        }
        let mut model = HyperForestModel { forests, schema, threshold: None, metadata };
        if let Some(t) = threshold {
            model.set_threshold(t)?;
        }
        Ok(model)
    }

    pub fn forests(&self) -> &[ForestModel] {
        &self.forests
    }

    pub fn n_forests(&self) -> usize {
        self.forests.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn set_threshold(&mut self, theta: f64) -> Result<(), HyperForestError> {
        check_threshold(theta)?;
        self.threshold = Some(theta);
        Ok(())
    }

    fn tally_with(&self, value: impl Fn(usize) -> f64 + Copy) -> VoteTally {
        let nc_votes = self.forests.iter().filter(|f| f.label_from_votes(f.nc_votes_with(value)) == Label::NC).count();
        VoteTally { nc_votes, total: self.forests.len() }
    }

    /// Each forest casts its majority label as one vote.
    pub fn vote_probability(&self, row: &[f64]) -> Result<VoteTally, HyperForestError> {
        if row.len() != self.schema.len() {
            return Err(ForestError::SchemaMismatch { expected: self.schema.len(), got: row.len() }.into());
        }
        Ok(self.tally_with(|f| row[f]))
    }

    /// Tallies for every row of a dataset laid out with this model's schema.
    pub fn tally_dataset(&self, data: &Dataset) -> Result<Vec<VoteTally>, HyperForestError> {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        self.tally_rows(data, &rows)
    }

    pub fn tally_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<VoteTally>, HyperForestError> {
        if data.n_features() != self.schema.len() {
            return Err(ForestError::SchemaMismatch { expected: self.schema.len(), got: data.n_features() }.into());
        }
        let per_forest: Vec<Vec<bool>> = self
            .forests
            .par_iter()
            .map(|forest| {
                forest.nc_votes_rows(data, rows).into_iter().map(|v| forest.label_from_votes(v) == Label::NC).collect()
            })
            .collect();
        let mut nc_votes = vec![0; rows.len()];
        for labels in &per_forest {
            for (v, &nc) in nc_votes.iter_mut().zip(labels) {
                *v += usize::from(nc);
            }
        }
        Ok(nc_votes.into_iter().map(|nc_votes| VoteTally { nc_votes, total: self.forests.len() }).collect())
    }

    /// Classify at `theta`, or at the stored threshold when `theta` is `None`.
    pub fn classify_with_threshold(&self, row: &[f64], theta: Option<f64>) -> Result<Label, HyperForestError> {
        let theta = self.resolve_threshold(theta)?;
        Ok(self.vote_probability(row)?.classify(theta))
    }

    pub fn resolve_threshold(&self, theta: Option<f64>) -> Result<f64, HyperForestError> {
        let theta = theta.or(self.threshold).ok_or(HyperForestError::ThresholdUnset)?;
        check_threshold(theta)?;
        Ok(theta)
    }

    /// Permutation importance of each forest on its own out-of-bag rows,
    /// averaged uniformly over forests. `data` is the training dataset.
    pub fn aggregate_importance(&self, data: &Dataset) -> Result<ImportanceVector, HyperForestError> {
        let mut values = vec![0.0; self.schema.len()];
        let mut skipped_trees = 0;
        for forest in &self.forests {
            let imp = permutation_importance(forest, data)?;
            for (v, x) in values.iter_mut().zip(&imp.values) {
                *v += x;
            }
            skipped_trees += imp.skipped_trees;
        }
        for v in &mut values {
            *v /= self.forests.len() as f64;
        }
        Ok(ImportanceVector { values, skipped_trees })
    }
}

fn check_threshold(theta: f64) -> Result<(), HyperForestError> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(HyperForestError::InvalidThreshold(theta))
    }
}
