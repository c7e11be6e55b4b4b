//! Out-of-bag permutation importance (mean decrease in accuracy).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForestError, ForestModel};
use crate::dataset::Dataset;

/// Per-feature mean decrease in out-of-bag accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
    /// Trees without out-of-bag rows, left out of the average.
    pub skipped_trees: usize,
}

/// For every tree, measure accuracy on its out-of-bag rows, then again with
/// one feature's values shuffled among those rows; the drop is averaged over
/// trees. `data` must be the dataset the forest was trained on.
pub fn permutation_importance(model: &ForestModel, data: &Dataset) -> Result<ImportanceVector, ForestError> {
    let p = model.schema().len();
    if data.n_features() != p {
        return Err(ForestError::SchemaMismatch { expected: p, got: data.n_features() });
    }
    let per_tree: Vec<Option<Vec<f64>>> = (0..model.n_trees())
        .into_par_iter()
        .map(|t| {
            let tree = &model.trees()[t];
            let oob: Vec<usize> = model.oob_rows(t).iter().map(|&r| r as usize).collect();
            if oob.is_empty() {
                return None;
            }
            let m = oob.len() as f64;
            let truth: Vec<_> = oob.iter().map(|&r| data.known_label(r)).collect();
            let base = oob.iter().zip(&truth).filter(|(&r, &y)| tree.predict_with(|f| data.value(r, f)) == y).count();
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed().wrapping_add(t as u64));
            rng.set_stream(1);
            let mut decrease = vec![0.0; p];
            // Features the tree never splits on cannot change its predictions.
            for j in tree.used_features() {
                let mut shuffled: Vec<f64> = oob.iter().map(|&r| data.value(r, j)).collect();
                shuffled.shuffle(&mut rng);
                let permuted = oob
                    .iter()
                    .zip(&truth)
                    .zip(&shuffled)
                    .filter(|((&r, &y), &v)| tree.predict_with(|f| if f == j { v } else { data.value(r, f) }) == y)
                    .count();
                decrease[j] = (base as f64 - permuted as f64) / m;
            }
            Some(decrease)
        })
        .collect();
    let used = per_tree.iter().flatten().count();
    if used == 0 {
        return Err(ForestError::NoOobRows);
    }
    let mut values = vec![0.0; p];
    for d in per_tree.iter().flatten() {
        for (v, x) in values.iter_mut().zip(d) {
            *v += x;
        }
    }
    for v in &mut values {
        *v /= used as f64;
    }
    Ok(ImportanceVector { values, skipped_trees: per_tree.len() - used })
}
