//! ROC analysis, threshold calibration, confusion matrices, summary
//! metrics and per-class feature correlations.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{FeatureSchema, Label};
use crate::dataset::Dataset;
use crate::forest::ImportanceVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no {0} rows to evaluate")]
    ClassAbsent(Label),
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("threshold grid is empty or has values outside [0, 1]")]
    InvalidGrid,
    #[error("class {0} needs at least two rows for correlations")]
    TooFewRows(Label),
}

/// Threshold below every score.
pub const SENTINEL_LOW: f64 = -f64::EPSILON;
/// Threshold above every score.
pub const SENTINEL_HIGH: f64 = 1.0 + f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThresholdGrid {
    /// `k / T` for `k = 0..=T`: the values a `T`-forest vote share can take.
    Votes(usize),
    /// The distinct observed scores.
    Observed,
    Explicit(Vec<f64>),
}

impl ThresholdGrid {
    /// Ascending grid values.
    pub fn values(&self, scores: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut v: Vec<f64> = match self {
            ThresholdGrid::Votes(t) => (0..=*t).map(|k| k as f64 / *t as f64).collect(),
            ThresholdGrid::Observed => scores.to_vec(),
            ThresholdGrid::Explicit(v) => v.clone(),
        };
        if v.is_empty() || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(EvalError::InvalidGrid);
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub theta: f64,
    pub fpr: f64,
    pub tpr: f64,
}

impl RocPoint {
    fn is_sentinel(&self) -> bool {
        !(0.0..=1.0).contains(&self.theta)
    }

    /// Squared distance to the ideal corner (0, 1).
    fn distance_sq(&self) -> f64 {
        self.fpr * self.fpr + (1.0 - self.tpr) * (1.0 - self.tpr)
    }
}

/// Points ordered by descending threshold, so FPR and TPR never decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Build a curve from points in descending-threshold order.
    pub fn from_points(points: Vec<RocPoint>) -> Self {
        let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0).sum();
        RocCurve { points, auc }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { predictions: a, labels: b });
    }
    Ok(())
}

fn class_totals(labels: &[Label]) -> Result<(usize, usize), EvalError> {
    let nc = labels.iter().filter(|l| **l == Label::NC).count();
    let c = labels.len() - nc;
    if c == 0 {
        return Err(EvalError::ClassAbsent(Label::C));
    }
    if nc == 0 {
        return Err(EvalError::ClassAbsent(Label::NC));
    }
    Ok((c, nc))
}

/// Counts of `(C, NC)` rows scoring strictly above `theta`.
fn above(scores: &[f64], labels: &[Label], theta: f64) -> (usize, usize) {
    let mut counts = (0, 0);
    for (s, l) in scores.iter().zip(labels) {
        if *s > theta {
            match l {
                Label::C => counts.0 += 1,
                Label::NC => counts.1 += 1,
            }
        }
    }
    counts
}

/// TPR and FPR (NC positive) at every grid threshold plus the two
/// sentinels; AUC by the trapezoidal rule.
pub fn roc_curve(scores: &[f64], labels: &[Label], grid: &ThresholdGrid) -> Result<RocCurve, EvalError> {
    check_lengths(scores.len(), labels.len())?;
    let (c, nc) = class_totals(labels)?;
    let mut thetas = grid.values(scores)?;
    thetas.insert(0, SENTINEL_LOW);
    thetas.push(SENTINEL_HIGH);
    let points = thetas
        .iter()
        .rev()
        .map(|&theta| {
            let (fp, tp) = above(scores, labels, theta);
            RocPoint { theta, fpr: fp as f64 / c as f64, tpr: tp as f64 / nc as f64 }
        })
        .collect();
    Ok(RocCurve::from_points(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub auc: f64,
}

/// The curve point closest to (0, 1). Ties go to the lower FPR, then the
/// higher threshold. Sentinel points are only used when nothing else exists.
pub fn select_best_threshold(curve: &RocCurve) -> CalibrationResult {
    let candidates: Vec<&RocPoint> = {
        let inner: Vec<&RocPoint> = curve.points.iter().filter(|p| !p.is_sentinel()).collect();
        if inner.is_empty() {
            curve.points.iter().collect()
        } else {
            inner
        }
    };
    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            a.distance_sq().total_cmp(&b.distance_sq()).then(a.fpr.total_cmp(&b.fpr)).then(b.theta.total_cmp(&a.theta))
        })
        .expect("curve has points");
    CalibrationResult { theta: best.theta, tpr: best.tpr, fpr: best.fpr, auc: curve.auc }
}

/// Counts with NC as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Row for true class `class`: `[predicted C, predicted NC]` counts.
    pub fn row(&self, class: Label) -> [usize; 2] {
        match class {
            Label::C => [self.tn, self.fp],
            Label::NC => [self.fn_, self.tp],
        }
    }

    /// Row normalized by the class total, or `None` when the class is absent.
    pub fn normalized_row(&self, class: Label) -> Option<[f64; 2]> {
        let [to_c, to_nc] = self.row(class);
        let n = to_c + to_nc;
        if n == 0 {
            return None;
        }
        let c_rate = to_c as f64 / n as f64;
        Some([c_rate, 1.0 - c_rate])
    }
}

pub fn confusion_matrix(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(predictions.len(), labels.len())?;
    let mut cm = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        match (l, p) {
            (Label::NC, Label::NC) => cm.tp += 1,
            (Label::C, Label::NC) => cm.fp += 1,
            (Label::C, Label::C) => cm.tn += 1,
            (Label::NC, Label::C) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Summary metrics; `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub nc_accuracy: Option<f64>,
    pub c_accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_suite(cm: &ConfusionMatrix, auc: Option<f64>) -> Result<MetricsReport, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let nc_accuracy = ratio(cm.tp, cm.tp + cm.fn_);
    let c_accuracy = ratio(cm.tn, cm.tn + cm.fp);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = nc_accuracy;
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        balanced_accuracy: nc_accuracy.zip(c_accuracy).map(|(a, b)| (a + b) / 2.0),
        nc_accuracy,
        c_accuracy,
        auc,
        precision,
        recall,
        f1,
    })
}

/// Label each score at threshold `theta` (NC iff strictly above).
pub fn classify_scores(scores: &[f64], theta: f64) -> Vec<Label> {
    scores.iter().map(|&s| if s > theta { Label::NC } else { Label::C }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub nc_accuracy: Option<f64>,
    pub c_accuracy: Option<f64>,
}

/// Metrics at each grid threshold, ascending.
pub fn threshold_sweep(scores: &[f64], labels: &[Label], grid: &ThresholdGrid) -> Result<Vec<SweepRow>, EvalError> {
    check_lengths(scores.len(), labels.len())?;
    class_totals(labels)?;
    grid.values(scores)?
        .into_iter()
        .map(|theta| {
            let m = metrics_suite(&confusion_matrix(&classify_scores(scores, theta), labels)?, None)?;
            Ok(SweepRow {
                theta,
                precision: m.precision,
                recall: m.recall,
                nc_accuracy: m.nc_accuracy,
                c_accuracy: m.c_accuracy,
            })
        })
        .collect()
}

/// Pearson correlations between the numeric features, one matrix per class.
/// Entries involving a constant column are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelations {
    pub features: Vec<String>,
    pub c: Vec<Vec<Option<f64>>>,
    pub nc: Vec<Vec<Option<f64>>>,
}

fn pearson_matrix(columns: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    let centered: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let dev: Vec<f64> = col.iter().map(|x| x - mean).collect();
            let ss = dev.iter().map(|d| d * d).sum::<f64>();
            (dev, ss)
        })
        .collect();
    let p = columns.len();
    let mut m = vec![vec![None; p]; p];
    for i in 0..p {
        if centered[i].1 == 0.0 {
            continue;
        }
        m[i][i] = Some(1.0);
        for j in i + 1..p {
            if centered[j].1 == 0.0 {
                continue;
            }
            let cov: f64 = centered[i].0.iter().zip(&centered[j].0).map(|(a, b)| a * b).sum();
            let r = (cov / (centered[i].1.sqrt() * centered[j].1.sqrt())).clamp(-1.0, 1.0);
            m[i][j] = Some(r);
            m[j][i] = Some(r);
        }
    }
    m
}

pub fn class_correlation_matrices(data: &Dataset, rows: &[usize]) -> Result<ClassCorrelations, EvalError> {
    let numeric = data.schema().numeric_indices();
    let mut per_class = Vec::new();
    for class in [Label::C, Label::NC] {
        let members: Vec<usize> = rows.iter().copied().filter(|&r| data.label(r) == Some(class)).collect();
        if members.len() < 2 {
            return Err(EvalError::TooFewRows(class));
        }
        let columns: Vec<Vec<f64>> =
            numeric.iter().map(|&f| members.iter().map(|&r| data.value(r, f)).collect()).collect();
        per_class.push(pearson_matrix(&columns));
    }
    let nc = per_class.pop().expect("two classes");
    let c = per_class.pop().expect("two classes");
    Ok(ClassCorrelations { features: numeric.iter().map(|&f| data.schema().get(f).name.clone()).collect(), c, nc })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Columns: `theta`, `fpr`, `tpr`.
pub fn write_roc_tsv<W: Write>(curve: &RocCurve, mut out: W) -> io::Result<()> {
    writeln!(out, "theta\tfpr\ttpr")?;
    for p in &curve.points {
        writeln!(out, "{}\t{}\t{}", p.theta, p.fpr, p.tpr)?;
    }
    Ok(())
}

/// Columns: `theta`, `precision`, `recall`, `nc_accuracy`, `c_accuracy`.
pub fn write_sweep_tsv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "theta\tprecision\trecall\tnc_accuracy\tc_accuracy")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.theta,
            opt(r.precision),
            opt(r.recall),
            opt(r.nc_accuracy),
            opt(r.c_accuracy)
        )?;
    }
    Ok(())
}

/// Columns: `rank`, `feature`, `group`, `importance`; most important first,
/// ties in schema order.
pub fn write_importance_tsv<W: Write>(
    schema: &FeatureSchema,
    importance: &ImportanceVector,
    mut out: W,
) -> io::Result<()> {
    let mut order: Vec<usize> = (0..schema.len()).collect();
    order.sort_by(|&a, &b| importance.values[b].total_cmp(&importance.values[a]).then(a.cmp(&b)));
    writeln!(out, "rank\tfeature\tgroup\timportance")?;
    for (rank, &f) in order.iter().enumerate() {
        let spec = schema.get(f);
        writeln!(out, "{}\t{}\t{}\t{}", rank + 1, spec.name, spec.group.tag(), importance.values[f])?;
    }
    Ok(())
}

/// Columns: `class`, `predicted_C`, `predicted_NC`, `rate_C`, `rate_NC`.
pub fn write_confusion_tsv<W: Write>(cm: &ConfusionMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "class\tpredicted_C\tpredicted_NC\trate_C\trate_NC")?;
    for class in [Label::C, Label::NC] {
        let [a, b] = cm.row(class);
        let rates = cm.normalized_row(class);
        writeln!(out, "{class}\t{a}\t{b}\t{}\t{}", opt(rates.map(|r| r[0])), opt(rates.map(|r| r[1])))?;
    }
    Ok(())
}

/// Columns: `metric`, `value`; the threshold used is the first row.
pub fn write_metrics_tsv<W: Write>(theta: f64, m: &MetricsReport, mut out: W) -> io::Result<()> {
    writeln!(out, "metric\tvalue")?;
    writeln!(out, "theta\t{theta}")?;
    for (name, v) in [
        ("accuracy", m.accuracy),
        ("balanced_accuracy", m.balanced_accuracy),
        ("nc_accuracy", m.nc_accuracy),
        ("c_accuracy", m.c_accuracy),
        ("auc", m.auc),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ] {
        writeln!(out, "{name}\t{}", opt(v))?;
    }
    Ok(())
}

/// Square matrix with a `feature` column followed by one column per feature.
pub fn write_correlation_tsv<W: Write>(features: &[String], matrix: &[Vec<Option<f64>>], mut out: W) -> io::Result<()> {
    writeln!(out, "feature\t{}", features.join("\t"))?;
    for (name, row) in features.iter().zip(matrix) {
        let cells: Vec<String> = row.iter().map(|v| opt(*v)).collect();
        writeln!(out, "{name}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{FeatureGroup, FeatureSpec};
    use proptest::prelude::*;
    use Label::*;

    #[test]
    fn perfect_separation() {
        let scores = [1.0, 1.0, 0.0, 0.0];
        let labels = [NC, NC, C, C];
        let curve = roc_curve(&scores, &labels, &ThresholdGrid::Votes(45)).unwrap();
        assert_eq!(curve.auc, 1.0);
        let best = select_best_threshold(&curve);
        assert_eq!((best.fpr, best.tpr), (0.0, 1.0));
        assert_eq!(best.theta, 44.0 / 45.0);
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn hand_trapezoid() {
        let pts = [(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)];
        let curve = RocCurve::from_points(
            pts.iter().enumerate().map(|(i, &(fpr, tpr))| RocPoint { theta: 1.0 - i as f64 / 2.0, fpr, tpr }).collect(),
        );
        assert!((curve.auc - 0.65).abs() < 1e-15);
    }

    #[test]
    fn hand_curve_calibration() {
        let pts = [(0.0, 0.0), (0.1, 0.9), (0.3, 0.95), (1.0, 1.0)];
        let curve = RocCurve::from_points(
            pts.iter().enumerate().map(|(i, &(fpr, tpr))| RocPoint { theta: 1.0 - i as f64 / 3.0, fpr, tpr }).collect(),
        );
        let best = select_best_threshold(&curve);
        assert_eq!((best.fpr, best.tpr), (0.1, 0.9));
    }

    #[test]
    fn calibration_tie_breaks() {
        // Equal distance: (0.1, 0.8) and (0.2, 0.9) both sit at sqrt(0.05).
        let curve = RocCurve::from_points(vec![
            RocPoint { theta: 0.8, fpr: 0.1, tpr: 0.8 },
            RocPoint { theta: 0.6, fpr: 0.2, tpr: 0.9 },
        ]);
        assert_eq!(select_best_threshold(&curve).theta, 0.8);
        let same = RocCurve::from_points(vec![
            RocPoint { theta: 0.8, fpr: 0.1, tpr: 0.8 },
            RocPoint { theta: 0.7, fpr: 0.1, tpr: 0.8 },
        ]);
        assert_eq!(select_best_threshold(&same).theta, 0.8);
    }

    #[test]
    fn roc_errors() {
        assert_eq!(roc_curve(&[0.5], &[NC], &ThresholdGrid::Observed), Err(EvalError::ClassAbsent(C)));
        assert!(matches!(roc_curve(&[0.5], &[NC, C], &ThresholdGrid::Observed), Err(EvalError::LengthMismatch { .. })));
        assert_eq!(roc_curve(&[0.5, 0.2], &[NC, C], &ThresholdGrid::Explicit(vec![2.0])), Err(EvalError::InvalidGrid));
    }

    #[test]
    fn confusion_rows() {
        let cm = confusion_matrix(&[NC, NC, C], &[NC, NC, NC]).unwrap();
        let row = cm.normalized_row(NC).unwrap();
        assert!((row[0] - 1.0 / 3.0).abs() < 1e-15 && (row[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.normalized_row(C), None);
        let perfect = confusion_matrix(&[C, NC, C], &[C, NC, C]).unwrap();
        assert_eq!(perfect.normalized_row(C), Some([1.0, 0.0]));
        assert_eq!(perfect.normalized_row(NC), Some([0.0, 1.0]));
        assert!(matches!(confusion_matrix(&[C], &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn symmetric_matrix_gives_half() {
        let cm = ConfusionMatrix { tp: 25, fp: 25, tn: 25, fn_: 25 };
        let m = metrics_suite(&cm, Some(0.5)).unwrap();
        for v in [m.accuracy, m.balanced_accuracy, m.nc_accuracy, m.c_accuracy, m.precision, m.recall, m.f1] {
            assert_eq!(v, Some(0.5));
        }
    }

    #[test]
    fn hand_checked_precision() {
        let m = metrics_suite(&ConfusionMatrix { tp: 9, fp: 1, tn: 0, fn_: 0 }, None).unwrap();
        assert_eq!(m.precision, Some(0.9));
        assert_eq!(m.recall, Some(1.0));
        assert!((m.f1.unwrap() - 18.0 / 19.0).abs() < 1e-9);
        assert_eq!(m.c_accuracy, Some(0.0));
        assert_eq!(m.balanced_accuracy, Some(0.5));
        let no_c = metrics_suite(&ConfusionMatrix { tp: 4, fp: 0, tn: 0, fn_: 1 }, None).unwrap();
        assert_eq!(no_c.c_accuracy, None);
        assert_eq!(no_c.balanced_accuracy, None);
        assert_eq!(metrics_suite(&ConfusionMatrix::default(), None), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn sweep_on_vote_grid() {
        let scores: Vec<f64> = (0..46).map(|k| k as f64 / 45.0).collect();
        let labels: Vec<Label> = (0..46).map(|k| if k > 20 { NC } else { C }).collect();
        let rows = threshold_sweep(&scores, &labels, &ThresholdGrid::Votes(45)).unwrap();
        assert_eq!(rows.len(), 46);
        assert_eq!(rows[0].recall, Some(1.0));
        for w in rows.windows(2) {
            assert!(w[1].recall.unwrap_or(0.0) <= w[0].recall.unwrap());
            if let (Some(a), Some(b)) = (w[0].precision, w[1].precision) {
                assert!(b >= a);
            }
        }
    }

    fn corr_dataset() -> Dataset {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::numeric("T.Spending", FeatureGroup::Relationship),
            FeatureSpec::numeric("ActiveWeeks", FeatureGroup::Relationship),
            FeatureSpec::numeric("SPW", FeatureGroup::Risk),
            FeatureSpec::categorical("GO", FeatureGroup::Contract, vec!["APF".into(), "GE".into()]),
        ])
        .unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let spending = 100.0 + 37.0 * i as f64 + (i * i) as f64;
            rows.push(vec![spending, 4.0, spending / 4.0, (i % 2) as f64]);
            labels.push(if i % 3 == 0 { C } else { NC });
        }
        Dataset::from_rows(schema, &rows, &labels)
    }

    #[test]
    fn correlations() {
        let ds = corr_dataset();
        let rows: Vec<usize> = (0..20).collect();
        let corr = class_correlation_matrices(&ds, &rows).unwrap();
        assert_eq!(corr.features, vec!["T.Spending", "ActiveWeeks", "SPW"]);
        for m in [&corr.c, &corr.nc] {
            assert_eq!(m[0][0], Some(1.0));
            assert!((m[0][2].unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(m[0][2], m[2][0]);
            assert_eq!(m[1][1], None);
            assert_eq!(m[0][1], None);
        }
        assert_eq!(class_correlation_matrices(&ds, &[0, 1, 2]), Err(EvalError::TooFewRows(C)));
    }

    #[test]
    fn tsv_shapes() {
        let cm = ConfusionMatrix { tp: 3, fp: 1, tn: 2, fn_: 0 };
        let mut buf = Vec::new();
        write_confusion_tsv(&cm, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("NC\t0\t3\t0\t1"));
        let ds = corr_dataset();
        let imp = ImportanceVector { values: vec![0.1, 0.0, 0.3, 0.2], skipped_trees: 0 };
        let mut buf = Vec::new();
        write_importance_tsv(ds.schema(), &imp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1\tSPW\tiv\t0.3");
    }

    fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, la) in scores.iter().zip(labels) {
            for (b, lb) in scores.iter().zip(labels) {
                if *la == NC && *lb == C {
                    pairs += 1.0;
                    if a > b {
                        wins += 1.0;
                    } else if a == b {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(raw in prop::collection::vec((0usize..=45, any::<bool>()), 2..120)) {
            let mut raw = raw;
            raw[0].1 = true;
            raw[1].1 = false;
            let scores: Vec<f64> = raw.iter().map(|(k, _)| *k as f64 / 45.0).collect();
            let labels: Vec<Label> = raw.iter().map(|(_, nc)| if *nc { NC } else { C }).collect();
            let curve = roc_curve(&scores, &labels, &ThresholdGrid::Votes(45)).unwrap();
            prop_assert!((curve.auc - mann_whitney(&scores, &labels)).abs() < 1e-12);
            let flipped: Vec<Label> = labels.iter().map(|l| if *l == NC { C } else { NC }).collect();
            let negated: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let reversed = roc_curve(&negated, &flipped, &ThresholdGrid::Observed).unwrap();
            prop_assert!((reversed.auc - curve.auc).abs() < 1e-12);
            for w in curve.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn metric_identities(tp in 0usize..500, fp in 0usize..500, tn in 0usize..500, fn_ in 0usize..500) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(cm.total() > 0);
            let m = metrics_suite(&cm, None).unwrap();
            if let (Some(b), Some(n), Some(c)) = (m.balanced_accuracy, m.nc_accuracy, m.c_accuracy) {
                prop_assert!((b - (n + c) / 2.0).abs() < 1e-12);
                let acc = m.accuracy.unwrap();
                prop_assert!(acc >= n.min(c) - 1e-12 && acc <= n.max(c) + 1e-12);
            }
            for class in [C, NC] {
                if let Some([a, b]) = cm.normalized_row(class) {
                    prop_assert_eq!(a + b, 1.0);
                }
            }
        }
    }
}
