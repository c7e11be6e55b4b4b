//! Gini impurity and best-split search for binary C/NC nodes.
//!
//! Candidate splits are compared with exact integer arithmetic: for a
//! split with per-class counts `l` (left) and `r` (right), the weighted
//! child impurity is minimized exactly when
//! `sum(l_k^2)/n_l + sum(r_k^2)/n_r` is maximized, so that ratio is what
//! gets compared. Ties therefore resolve deterministically instead of by
//! floating-point noise.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::contracts::FeatureKind;
use crate::dataset::{level_code, Dataset};

/// `1 - sum((n_k / n)^2)`.
pub fn gini_impurity(counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    let n = total as f64;
    Ok(1.0 - counts.iter().map(|&k| (k as f64 / n).powi(2)).sum::<f64>())
}

/// Per-class counts `[C, NC]`.
pub type ClassCounts = [u64; 2];

fn sum_sq(c: ClassCounts) -> u128 {
    u128::from(c[0]) * u128::from(c[0]) + u128::from(c[1]) * u128::from(c[1])
}

fn total(c: ClassCounts) -> u64 {
    c[0] + c[1]
}

/// Exact value of `sum(l_k^2)/n_l + sum(r_k^2)/n_r` as a fraction.
#[derive(Debug, Clone, Copy)]
pub struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    pub fn new(left: ClassCounts, right: ClassCounts) -> Self {
        let (nl, nr) = (u128::from(total(left)), u128::from(total(right)));
        debug_assert!(nl > 0 && nr > 0);
        SplitScore { num: sum_sq(left) * nr + sum_sq(right) * nl, den: nl * nr }
    }

    fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Compare `a/b` with `c/d`, falling back to floating point on overflow.
    fn cmp_fraction(a: u128, b: u128, c: u128, d: u128) -> Ordering {
        match (a.checked_mul(d), c.checked_mul(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => (a as f64 / b as f64).total_cmp(&(c as f64 / d as f64)),
        }
    }

    pub fn compare(&self, other: &SplitScore) -> Ordering {
        Self::cmp_fraction(self.num, self.den, other.num, other.den)
    }

    /// Whether this split strictly lowers the impurity of `parent`.
    pub fn improves(&self, parent: ClassCounts) -> bool {
        Self::cmp_fraction(self.num, self.den, sum_sq(parent), u128::from(total(parent))) == Ordering::Greater
    }

    /// Gini impurity decrease relative to `parent`.
    pub fn impurity_decrease(&self, parent: ClassCounts) -> f64 {
        let n = total(parent) as f64;
        (self.as_f64() - sum_sq(parent) as f64 / n) / n
    }
}

/// Where a row goes at an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Left iff `value <= threshold`.
    Numeric { feature: usize, threshold: f64 },
    /// Left iff the level is in `left`. Levels outside `observed` (never
    /// seen at this node during training) follow `unseen_left`.
    Categorical { feature: usize, left: u64, observed: u64, unseen_left: bool },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::Numeric { feature, .. } | SplitRule::Categorical { feature, .. } => *feature,
        }
    }

    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        match *self {
            SplitRule::Numeric { threshold, .. } => value <= threshold,
            SplitRule::Categorical { left, observed, unseen_left, .. } => match level_code(value) {
                Some(code) if observed & (1 << code) != 0 => left & (1 << code) != 0,
                _ => unseen_left,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub score: SplitScore,
    pub decrease: f64,
    pub left_counts: ClassCounts,
    pub right_counts: ClassCounts,
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best split of `rows` over `features`, or `None` when no candidate
/// strictly lowers impurity. Ties go to the lower feature index, then to
/// the lower threshold (numeric) or the shorter level prefix (categorical).
pub fn find_best_split(
    data: &Dataset,
    labels: &[u8],
    rows: &[usize],
    features: &[usize],
    scratch: &mut Vec<(f64, u8)>,
) -> Option<SplitCandidate> {
    let mut parent: ClassCounts = [0, 0];
    for &r in rows {
        parent[labels[r] as usize] += 1;
    }
    if rows.len() < 2 || parent[0] == 0 || parent[1] == 0 {
        return None;
    }
    let mut sorted_features = features.to_vec();
    sorted_features.sort_unstable();
    let mut best: Option<(SplitScore, SplitRule, ClassCounts, ClassCounts)> = None;
    let mut consider = |score: SplitScore, rule: SplitRule, l: ClassCounts, r: ClassCounts| {
        if !score.improves(parent) {
            return;
        }
        if best.as_ref().is_none_or(|(b, ..)| score.compare(b) == Ordering::Greater) {
            best = Some((score, rule, l, r));
        }
    };
    for &f in &sorted_features {
        let column = data.column(f);
        match &data.schema().get(f).kind {
            FeatureKind::Numeric => {
                scratch.clear();
                scratch.extend(rows.iter().map(|&r| (column[r], labels[r])));
                scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut left: ClassCounts = [0, 0];
                for i in 0..scratch.len() - 1 {
                    left[scratch[i].1 as usize] += 1;
                    let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
                    if lo < hi {
                        let right = [parent[0] - left[0], parent[1] - left[1]];
                        let rule = SplitRule::Numeric { feature: f, threshold: midpoint(lo, hi) };
                        consider(SplitScore::new(left, right), rule, left, right);
                    }
                }
            }
            FeatureKind::Categorical { .. } => {
                let mut per_level = [[0u64; 2]; 64];
                let mut observed = 0u64;
                for &r in rows {
                    let code = level_code(column[r]).expect("training levels are validated");
                    per_level[code][labels[r] as usize] += 1;
                    observed |= 1 << code;
                }
                let mut levels: Vec<usize> = (0..64).filter(|&c| observed & (1 << c) != 0).collect();
                if levels.len() < 2 {
                    continue;
                }
                // Order by NC proportion; the best binary partition is a prefix.
                levels.sort_by(|&a, &b| {
                    let (ca, cb) = (per_level[a], per_level[b]);
                    let lhs = u128::from(ca[1]) * u128::from(total(cb));
                    let rhs = u128::from(cb[1]) * u128::from(total(ca));
                    lhs.cmp(&rhs).then(a.cmp(&b))
                });
                let mut left: ClassCounts = [0, 0];
                let mut mask = 0u64;
                for &level in &levels[..levels.len() - 1] {
                    left[0] += per_level[level][0];
                    left[1] += per_level[level][1];
                    mask |= 1 << level;
                    let right = [parent[0] - left[0], parent[1] - left[1]];
                    let rule = SplitRule::Categorical {
                        feature: f,
                        left: mask,
                        observed,
                        unseen_left: total(left) >= total(right),
                    };
                    consider(SplitScore::new(left, right), rule, left, right);
                }
            }
        }
    }
    best.map(|(score, rule, left_counts, right_counts)| SplitCandidate {
        decrease: score.impurity_decrease(parent),
        rule,
        score,
        left_counts,
        right_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{FeatureGroup, FeatureSchema, FeatureSpec, Label};

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert!(matches!(gini_impurity(&[0, 0]), Err(ForestError::EmptyNode)));
    }

    fn numeric(values: &[f64], labels: &[Label]) -> (Dataset, Vec<u8>) {
        let schema = FeatureSchema::new(vec![FeatureSpec::numeric("x", FeatureGroup::Other)]).unwrap();
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let ds = Dataset::from_rows(schema, &rows, labels);
        let codes = labels.iter().map(|l| l.index() as u8).collect();
        (ds, codes)
    }

    #[test]
    fn numeric_midpoint_split() {
        use Label::*;
        let (ds, y) = numeric(&[1.0, 2.0, 8.0, 9.0], &[C, C, NC, NC]);
        let best = find_best_split(&ds, &y, &[0, 1, 2, 3], &[0], &mut Vec::new()).unwrap();
        assert_eq!(best.rule, SplitRule::Numeric { feature: 0, threshold: 5.0 });
        assert_eq!(best.decrease, 0.5);
    }

    #[test]
    fn pure_node_has_no_split() {
        use Label::*;
        let (ds, y) = numeric(&[1.0, 2.0, 8.0], &[NC, NC, NC]);
        assert!(find_best_split(&ds, &y, &[0, 1, 2], &[0], &mut Vec::new()).is_none());
        // Identical values with mixed labels cannot be separated.
        let (ds, y) = numeric(&[3.0, 3.0], &[C, NC]);
        assert!(find_best_split(&ds, &y, &[0, 1], &[0], &mut Vec::new()).is_none());
    }

    #[test]
    fn categorical_partition() {
        use Label::*;
        let schema =
            FeatureSchema::new(vec![FeatureSpec::categorical("g", FeatureGroup::Other, vec!["A".into(), "B".into()])])
                .unwrap();
        let ds = Dataset::from_rows(schema, &[vec![0.0], vec![0.0], vec![1.0], vec![1.0]], &[C, C, NC, NC]);
        let y = [0u8, 0, 1, 1];
        let best = find_best_split(&ds, &y, &[0, 1, 2, 3], &[0], &mut Vec::new()).unwrap();
        match best.rule {
            SplitRule::Categorical { left, observed, .. } => {
                assert_eq!(left, 0b01);
                assert_eq!(observed, 0b11);
            }
            other => panic!("{other:?}"),
        }
        assert!(best.rule.goes_left(0.0));
        assert!(!best.rule.goes_left(1.0));
    }

    #[test]
    fn score_ordering_is_exact() {
        // 1/3 + 2/3 style ties: both splits score exactly 3.
        let a = SplitScore::new([1, 0], [1, 1]);
        let b = SplitScore::new([0, 1], [1, 1]);
        assert_eq!(a.compare(&b), Ordering::Equal);
        assert!(a.improves([2, 1]));
        assert!(!SplitScore::new([1, 1], [1, 1]).improves([2, 2]));
    }
}
