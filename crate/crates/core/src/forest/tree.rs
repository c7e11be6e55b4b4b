//! Unpruned CART classification trees stored as a flat node arena.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{find_best_split, ClassCounts, SplitRule};
use crate::contracts::Label;
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal { rule: SplitRule, left: u32, right: u32 },
    Leaf { label: Label, counts: [u32; 2] },
}

/// Majority label with ties going to NC.
pub fn majority_label(counts: ClassCounts) -> Label {
    if counts[1] >= counts[0] {
        Label::NC
    } else {
        Label::C
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Features sampled at each node.
    pub features_per_split: usize,
    /// Nodes with fewer rows than this become leaves.
    pub min_node_size: usize,
}

/// A trained tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Predict by looking feature values up through `value`.
    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> Label {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Internal { rule, left, right } => {
                    i = if rule.goes_left(value(rule.feature())) { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Label {
        self.predict_with(|f| row[f])
    }

    /// Sorted indices of features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { rule, .. } => Some(rule.feature()),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Grow a tree on `rows` (duplicates allowed). `labels` holds the class
/// index of every dataset row. Splitting stops at pure nodes, nodes without
/// an impurity-lowering split, and nodes smaller than `min_node_size`.
pub fn grow_tree<R: Rng>(
    data: &Dataset,
    labels: &[u8],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> DecisionTree {
    assert!(!rows.is_empty(), "cannot grow a tree on no rows");
    let p = data.n_features();
    let mtry = params.features_per_split.clamp(1, p.max(1));
    let mut work = rows.to_vec();
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { label: Label::NC, counts: [0, 0] }];
    let mut scratch = Vec::new();
    // (node index, start, end) over `work`.
    let mut stack = vec![(0usize, 0usize, work.len())];
    while let Some((node, start, end)) = stack.pop() {
        let segment = &mut work[start..end];
        let mut counts: ClassCounts = [0, 0];
        for &r in segment.iter() {
            counts[labels[r] as usize] += 1;
        }
        let leaf = TreeNode::Leaf { label: majority_label(counts), counts: [counts[0] as u32, counts[1] as u32] };
        let n = segment.len();
        if n < 2 || n < params.min_node_size || counts[0] == 0 || counts[1] == 0 {
            nodes[node] = leaf;
            continue;
        }
        let features: Vec<usize> = if mtry >= p { (0..p).collect() } else { sample(rng, p, mtry).into_vec() };
        let Some(best) = find_best_split(data, labels, segment, &features, &mut scratch) else {
            nodes[node] = leaf;
            continue;
        };
        let column = data.column(best.rule.feature());
        let (mut lefts, rights): (Vec<usize>, Vec<usize>) =
            segment.iter().partition(|&&r| best.rule.goes_left(column[r]));
        let n_left = lefts.len();
        debug_assert!(n_left > 0 && n_left < n);
        lefts.extend(rights);
        segment.copy_from_slice(&lefts);
        let left = nodes.len() as u32;
        let right = left + 1;
        nodes.push(TreeNode::Leaf { label: Label::NC, counts: [0, 0] });
        nodes.push(TreeNode::Leaf { label: Label::NC, counts: [0, 0] });
        nodes[node] = TreeNode::Internal { rule: best.rule, left, right };
        stack.push((right as usize, start + n_left, end));
        stack.push((left as usize, start, start + n_left));
    }
    DecisionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{FeatureGroup, FeatureSchema, FeatureSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_data(rows: &[Vec<f64>], labels: &[Label]) -> (Dataset, Vec<u8>) {
        let p = rows[0].len();
        let schema =
            FeatureSchema::new((0..p).map(|i| FeatureSpec::numeric(&format!("x{i}"), FeatureGroup::Other)).collect())
                .unwrap();
        let codes = labels.iter().map(|l| l.index() as u8).collect();
        (Dataset::from_rows(schema, rows, labels), codes)
    }

    fn params(p: usize) -> TreeParams {
        TreeParams { features_per_split: p, min_node_size: 1 }
    }

    #[test]
    fn separable_data_gives_stump() {
        use Label::*;
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 10.0, 11.0].iter().map(|&v| vec![v]).collect();
        let (ds, y) = numeric_data(&rows, &[C, C, C, NC, NC]);
        let tree = grow_tree(&ds, &y, &[0, 1, 2, 3, 4], &params(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.depth(), 1);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(tree.predict(r).index() as u8, y[i]);
        }
    }

    #[test]
    fn identical_rows_make_single_leaf() {
        use Label::*;
        let rows = vec![vec![1.0, 2.0]; 5];
        let (ds, y) = numeric_data(&rows, &[C, C, C, NC, NC]);
        let tree = grow_tree(&ds, &y, &[0, 1, 2, 3, 4], &params(2), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&rows[0]), C);
        let (ds, y) = numeric_data(&rows[..2], &[C, NC]);
        let tree = grow_tree(&ds, &y, &[0, 1], &params(2), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.predict(&rows[0]), NC, "leaf ties go to NC");
    }

    #[test]
    fn min_node_size_stops_growth() {
        use Label::*;
        let rows: Vec<Vec<f64>> = (0..6).map(|v| vec![v as f64]).collect();
        let (ds, y) = numeric_data(&rows, &[C, NC, C, NC, C, NC]);
        let tree = grow_tree(
            &ds,
            &y,
            &[0, 1, 2, 3, 4, 5],
            &TreeParams { features_per_split: 1, min_node_size: 7 },
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(tree.nodes().len(), 1);
    }

    #[test]
    fn unseen_level_follows_heavier_child() {
        use Label::*;
        let schema = FeatureSchema::new(vec![FeatureSpec::categorical(
            "g",
            FeatureGroup::Other,
            vec!["A".into(), "B".into(), "Z".into()],
        )])
        .unwrap();
        // Level A: 3 rows, all C; level B: 1 row, NC. A side is heavier.
        let ds = Dataset::from_rows(schema, &[vec![0.0], vec![0.0], vec![0.0], vec![1.0]], &[C, C, C, NC]);
        let y = [0u8, 0, 0, 1];
        let tree = grow_tree(&ds, &y, &[0, 1, 2, 3], &params(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.predict(&[2.0]), C);
        assert_eq!(tree.predict(&[f64::NAN]), C);
        assert_eq!(tree.predict(&[1.0]), NC);
    }

    proptest! {
        // With continuous features every non-constant sampled feature admits an
        // impurity-lowering split, so growth only stops at pure nodes.
        #[test]
        fn continuous_data_is_fit_perfectly(
            raw in prop::collection::vec((prop::collection::vec(-100.0f64..100.0, 3), any::<bool>()), 1..20),
            mtry in 1usize..=3,
            seed in any::<u64>(),
        ) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|(r, _)| r.clone()).collect();
            let labels: Vec<Label> = raw.iter().map(|(_, nc)| if *nc { Label::NC } else { Label::C }).collect();
            let (ds, y) = numeric_data(&rows, &labels);
            let idx: Vec<usize> = (0..rows.len()).collect();
            let tree = grow_tree(&ds, &y, &idx, &TreeParams { features_per_split: mtry, min_node_size: 1 }, &mut ChaCha8Rng::seed_from_u64(seed));
            for (r, l) in rows.iter().zip(&labels) {
                prop_assert_eq!(tree.predict(r), *l);
            }
        }
    }
}
