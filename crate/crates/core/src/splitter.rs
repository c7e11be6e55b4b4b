//! Stratified training/calibration/test partition and balanced
//! sub-sampling of the training set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::Label;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("class {0} has no rows")]
    ClassAbsent(Label),
    #[error("split fractions must each lie in (0, 1) and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("more C rows ({c}) than NC rows ({nc})")]
    ImbalanceInverted { c: usize, nc: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.5, calibration: 0.2, test: 0.3 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SplitError> {
        let f = [self.train, self.calibration, self.test];
        let in_range = f.iter().all(|&x| x > 0.0 && x < 1.0);
        if !in_range || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadFractions(f));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train, self.calibration, self.test]
    }
}

/// Disjoint, exhaustive row index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split `n` items into three counts by largest-remainder rounding. Ties
/// in the fractional part go to the earlier split.
pub fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut counts: [usize; 3] = [raw[0].floor() as usize, raw[1].floor() as usize, raw[2].floor() as usize];
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Class-stratified split. Each class is shuffled independently and cut by
/// [`largest_remainder`], so every split holds its share within one row per class.
pub fn stratified_split(labels: &[Label], spec: &SplitSpec, seed: u64) -> Result<DataSplit, SplitError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DataSplit { train: Vec::new(), calibration: Vec::new(), test: Vec::new() };
    for class in [Label::C, Label::NC] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.is_empty() {
            return Err(SplitError::ClassAbsent(class));
        }
        rows.shuffle(&mut rng);
        let [a, b, _] = largest_remainder(rows.len(), spec.fractions());
        split.train.extend_from_slice(&rows[..a]);
        split.calibration.extend_from_slice(&rows[a..a + b]);
        split.test.extend_from_slice(&rows[a + b..]);
    }
    split.train.sort_unstable();
    split.calibration.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// All training C rows plus an equal number of NC rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSubsample {
    pub c_rows: Vec<usize>,
    pub nc_rows: Vec<usize>,
}

impl BalancedSubsample {
    /// C rows followed by NC rows.
    pub fn rows(&self) -> Vec<usize> {
        self.c_rows.iter().chain(&self.nc_rows).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.c_rows.len() + self.nc_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of balanced subsamples for the given class sizes: the NC/C ratio
/// rounded half away from zero.
pub fn subsample_count(c: usize, nc: usize) -> usize {
    (nc as f64 / c as f64).round() as usize
}

/// Partition the shuffled NC training rows into consecutive chunks of
/// `|C|` rows. A short final chunk is topped up with rows drawn without
/// replacement from the earlier chunks.
///
/// Full NC coverage holds only when `subsample_count * |C| >= |NC|`; when the
/// ratio rounds down, the rows after the last chunk are not used.
pub fn balanced_subsamples(train: &[usize], labels: &[Label], seed: u64) -> Result<Vec<BalancedSubsample>, SplitError> {
    let c_rows: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == Label::C).collect();
    let mut pool: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == Label::NC).collect();
    if c_rows.is_empty() {
        return Err(SplitError::ClassAbsent(Label::C));
    }
    if pool.is_empty() {
        return Err(SplitError::ClassAbsent(Label::NC));
    }
    let c = c_rows.len();
    if c > pool.len() {
        return Err(SplitError::ImbalanceInverted { c, nc: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let count = subsample_count(c, pool.len());
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * c;
        let end = (start + c).min(pool.len());
        let mut nc_rows = pool[start..end].to_vec();
        if nc_rows.len() < c {
            let used = &pool[..start];
            let top_up = used.choose_multiple(&mut rng, c - nc_rows.len());
            nc_rows.extend(top_up);
        }
        out.push(BalancedSubsample { c_rows: c_rows.clone(), nc_rows });
    }
    Ok(out)
}
