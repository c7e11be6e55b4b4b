//! Recursive feature elimination driven by aggregate hyper-forest
//! permutation importance.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::Label;
use crate::dataset::Dataset;
use crate::evaluation::{
    classify_scores, confusion_matrix, metrics_suite, roc_curve, select_best_threshold, CalibrationResult, EvalError,
    ThresholdGrid,
};
use crate::forest::ForestParams;
use crate::hyper_forest::{train_hyper_forest, HyperForestError, HyperForestModel};
use crate::splitter::{balanced_subsamples, DataSplit, SplitError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfeError {
    #[error("dataset has no features")]
    NoFeatures,
    #[error("dataset has unlabeled rows")]
    Unlabeled,
    #[error("balanced accuracy undefined at stage {0}: a class is missing from the test split")]
    UndefinedAccuracy(usize),
    #[error("stage output failed: {0}")]
    Io(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    HyperForest(#[from] HyperForestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStage {
    /// Features used at this stage, in dataset order.
    pub remaining: Vec<String>,
    /// Least important feature, dropped before the next stage.
    pub eliminated: Option<String>,
    /// Threshold calibrated on the calibration split.
    pub theta: f64,
    pub calibration: CalibrationResult,
    pub balanced_accuracy: f64,
    pub nc_accuracy: f64,
    pub c_accuracy: f64,
    /// Aggregate importance of each remaining feature.
    pub importance: Vec<f64>,
}

impl RfeStage {
    /// The feature this stage adds in forward reading order.
    pub fn forward_feature(&self) -> &str {
        self.eliminated.as_deref().unwrap_or(&self.remaining[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeTrace {
    pub stages: Vec<RfeStage>,
}

pub struct RfeOutcome {
    pub trace: RfeTrace,
    pub best_stage: usize,
    /// Hyper-forest of the best stage, trained on `best_features` only.
    pub best_model: HyperForestModel,
}

impl RfeOutcome {
    pub fn best_features(&self) -> &[String] {
        &self.trace.stages[self.best_stage].remaining
    }
}

/// Start from every feature; at each stage train a hyper-forest on the
/// balanced sub-samples of the training split, calibrate θ on the
/// calibration split, score the test split, then drop the least important
/// feature (the later one on ties). Stops when one feature is left.
/// `on_stage` sees every stage as soon as it completes.
///
/// The best subset maximizes test balanced accuracy, ties going to the
/// smaller subset.
pub fn run_rfe(
    data: &Dataset,
    split: &DataSplit,
    params: &ForestParams,
    seed: u64,
    mut on_stage: impl FnMut(&RfeStage) -> io::Result<()>,
) -> Result<RfeOutcome, RfeError> {
    if data.n_features() == 0 {
        return Err(RfeError::NoFeatures);
    }
    if !data.is_fully_labeled() {
        return Err(RfeError::Unlabeled);
    }
    let labels: Vec<Label> = (0..data.n_rows()).map(|r| data.known_label(r)).collect();
    let subsamples = balanced_subsamples(&split.train, &labels, seed)?;
    let calibration_labels: Vec<Label> = split.calibration.iter().map(|&r| labels[r]).collect();
    let test_labels: Vec<Label> = split.test.iter().map(|&r| labels[r]).collect();

    let mut remaining: Vec<usize> = (0..data.n_features()).collect();
    let mut stages = Vec::new();
    let mut best: Option<(usize, f64, HyperForestModel)> = None;
    loop {
        let view = data.select_features(&remaining);
        let mut model = train_hyper_forest(&view, &subsamples, params, seed)?;
        let t = model.n_forests();

        let scores = |rows: &[usize]| -> Result<Vec<f64>, HyperForestError> {
            Ok(model.tally_rows(&view, rows)?.iter().map(|v| v.probability()).collect())
        };
        let curve = roc_curve(&scores(&split.calibration)?, &calibration_labels, &ThresholdGrid::Votes(t))?;
        let calibration = select_best_threshold(&curve);
        let theta = calibration.theta;
        let test_scores = scores(&split.test)?;
        let cm = confusion_matrix(&classify_scores(&test_scores, theta), &test_labels)?;
        let metrics = metrics_suite(&cm, None)?;
        let index = stages.len();
        let (Some(balanced_accuracy), Some(nc_accuracy), Some(c_accuracy)) =
            (metrics.balanced_accuracy, metrics.nc_accuracy, metrics.c_accuracy)
        else {
            return Err(RfeError::UndefinedAccuracy(index));
        };
        model.set_threshold(theta)?;

        let importance = if remaining.len() > 1 { model.aggregate_importance(&view)?.values } else { vec![0.0] };
        let eliminated = (remaining.len() > 1).then(|| {
            (0..remaining.len())
                .min_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(b.cmp(&a)))
                .expect("features remain")
        });
        let stage = RfeStage {
            remaining: remaining.iter().map(|&f| data.schema().get(f).name.clone()).collect(),
            eliminated: eliminated.map(|i| data.schema().get(remaining[i]).name.clone()),
            theta,
            calibration,
            balanced_accuracy,
            nc_accuracy,
            c_accuracy,
            importance,
        };
        on_stage(&stage).map_err(|e| RfeError::Io(e.to_string()))?;
        if best.as_ref().is_none_or(|(_, b, _)| balanced_accuracy >= *b) {
            best = Some((index, balanced_accuracy, model));
        }
        stages.push(stage);
        match eliminated {
            Some(i) => {
                remaining.remove(i);
            }
            None => break,
        }
    }
    let (best_stage, _, best_model) = best.expect("at least one stage");
    Ok(RfeOutcome { trace: RfeTrace { stages }, best_stage, best_model })
}

/// Class-prior reference: `[balanced, NC, C]` accuracy of labeling each
/// class with its share of the test split.
pub fn random_baseline(test_labels: &[Label]) -> [f64; 3] {
    let n = test_labels.len() as f64;
    let nc = test_labels.iter().filter(|l| **l == Label::NC).count() as f64 / n;
    [0.5, nc, 1.0 - nc]
}

/// Forward-order table: a `Random` reference row, then one row per stage
/// from the single-feature stage up to the full set.
/// Columns: `feature`, `type`, `balanced_accuracy`, `nc_accuracy`, `c_accuracy`.
pub fn write_rfe_tsv<W: Write>(trace: &RfeTrace, data: &Dataset, baseline: [f64; 3], mut out: W) -> io::Result<()> {
    writeln!(out, "feature\ttype\tbalanced_accuracy\tnc_accuracy\tc_accuracy")?;
    writeln!(out, "Random\t-\t{}\t{}\t{}", baseline[0], baseline[1], baseline[2])?;
    for stage in trace.stages.iter().rev() {
        let name = stage.forward_feature();
        let tag = data.schema().index_of(name).map_or("-", |i| data.schema().get(i).group.tag());
        writeln!(out, "{name}\t{tag}\t{}\t{}\t{}", stage.balanced_accuracy, stage.nc_accuracy, stage.c_accuracy)?;
    }
    Ok(())
}

pub const TRACE_HEADER: &str =
    "stage\tn_features\teliminated\ttheta\tbalanced_accuracy\tnc_accuracy\tc_accuracy\tremaining";

/// One line of the per-stage trace log, without the trailing newline.
pub fn trace_line(index: usize, stage: &RfeStage) -> String {
    format!(
        "{index}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        stage.remaining.len(),
        stage.eliminated.as_deref().unwrap_or("-"),
        stage.theta,
        stage.balanced_accuracy,
        stage.nc_accuracy,
        stage.c_accuracy,
        stage.remaining.join(",")
    )
}
