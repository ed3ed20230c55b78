//! CART-style decision trees (Gini impurity, midpoint thresholds, random
//! feature subsets per node) and bootstrap-aggregated forests.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed_indexed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        pos_fraction: f64,
    },
}

/// Array-encoded binary decision tree; node 0 is the root, `x[feature] <=
/// threshold` routes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut ix = 0usize;
        loop {
            match &self.nodes[ix] {
                TreeNode::Leaf { pos_fraction } => return *pos_fraction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    ix = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], ix: usize) -> usize {
            match &nodes[ix] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct TreeBuilder<'a> {
    data: ArrayView2<'a, f64>,
    labels: &'a [u8],
    max_depth: Option<usize>,
    features_per_split: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&mut self, idx: &[usize]) -> u32 {
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        self.nodes.push(TreeNode::Leaf {
            pos_fraction: pos as f64 / idx.len() as f64,
        });
        (self.nodes.len() - 1) as u32
    }

    fn grow<R: Rng>(&mut self, idx: &[usize], depth: usize, rng: &mut R) -> u32 {
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        let pure = pos == 0 || pos == idx.len();
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if pure || idx.len() < 2 || depth_capped {
            return self.leaf(idx);
        }

        // random feature subset, iterated in sorted order for determinism
        let d = self.data.ncols();
        let k = self.features_per_split.min(d);
        let mut features: Vec<usize> = (0..d).collect();
        for j in 0..k {
            let swap = j + rng.gen_range(0..d - j);
            features.swap(j, swap);
        }
        features.truncate(k);
        features.sort_unstable();

        // best Gini-impurity decrease over midpoint thresholds; a zero-gain
        // split is still taken on an impure node so structure like XOR can
        // resolve at the next level
        let parent_gini = gini(pos, idx.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<(f64, u8)> = Vec::with_capacity(idx.len());
        for &f in &features {
            values.clear();
            values.extend(idx.iter().map(|&i| (self.data[[i, f]], self.labels[i])));
            values.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let total_pos = pos;
            let n = values.len();
            let mut left_pos = 0usize;
            for split_at in 1..n {
                left_pos += (values[split_at - 1].1 == 1) as usize;
                if values[split_at].0 == values[split_at - 1].0 {
                    continue;
                }
                let left_n = split_at;
                let right_n = n - split_at;
                let right_pos = total_pos - left_pos;
                let weighted = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(right_pos, right_n))
                    / n as f64;
                let decrease = parent_gini - weighted;
                let threshold = 0.5 * (values[split_at - 1].0 + values[split_at].0);
                if best.is_none_or(|(b, _, _)| decrease > b) {
                    best = Some((decrease, f, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            // all candidate features constant on this node
            return self.leaf(idx);
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.data[[i, feature]] <= threshold);
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

        let me = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_idx, depth + 1, rng);
        let right = self.grow(&right_idx, depth + 1, rng);
        if let TreeNode::Split {
            left: l, right: r, ..
        } = &mut self.nodes[me]
        {
            *l = left;
            *r = right;
        }
        me as u32
    }
}

/// Greedy CART training on the rows of `data` selected by `idx`.
pub fn train_tree(
    data: ArrayView2<'_, f64>,
    labels: &[u8],
    idx: &[usize],
    max_depth: Option<usize>,
    features_per_split: usize,
    seed: u64,
) -> DecisionTree {
    assert!(!idx.is_empty(), "tree needs at least one sample");
    let mut builder = TreeBuilder {
        data,
        labels,
        max_depth,
        features_per_split: features_per_split.max(1),
        nodes: Vec::new(),
    };
    let mut rng = rng_from_seed(seed);
    builder.grow(idx, 0, &mut rng);
    DecisionTree {
        nodes: builder.nodes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees_count: usize,
    /// Defaults to ceil(sqrt(d)) when absent.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees_count: 100,
            features_per_split: None,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub features_per_split: usize,
    pub seed: u64,
}

impl RandomForest {
    /// Mean of the trees' leaf fractions; always in [0, 1].
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

/// Trains `trees_count` trees, each on a bootstrap resample (same size, with
/// replacement) of `idx`, with independent seed streams per tree.
pub fn train_forest(
    data: ArrayView2<'_, f64>,
    labels: &[u8],
    idx: &[usize],
    params: &ForestParams,
    seed: u64,
) -> RandomForest {
    let d = data.ncols();
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .max(1);
    let mut trees = Vec::with_capacity(params.trees_count);
    for t in 0..params.trees_count {
        let mut boot_rng =
            rng_from_seed(derive_seed_indexed(seed, "bootstrap", &[t as u64]));
        let boot: Vec<usize> = (0..idx.len())
            .map(|_| idx[boot_rng.gen_range(0..idx.len())])
            .collect();
        let tree_seed = derive_seed_indexed(seed, "tree", &[t as u64]);
        trees.push(train_tree(
            data,
            labels,
            &boot,
            params.max_depth,
            features_per_split,
            tree_seed,
        ));
    }
    RandomForest {
        trees,
        features_per_split,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn pure_labels_give_single_leaf() {
        let data = array![[0.0], [1.0], [2.0]];
        let labels = [1, 1, 1];
        let tree = train_tree(data.view(), &labels, &[0, 1, 2], None, 1, 0);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[5.0]), 1.0);
    }

    #[test]
    fn one_dimensional_split_at_midpoint() {
        // {(0, label 0), (1, label 1)}: the exhaustive-split oracle says the
        // only (and hence Gini-optimal) threshold is 0.5
        let data = array![[0.0], [1.0]];
        let labels = [0, 1];
        let tree = train_tree(data.view(), &labels, &[0, 1], None, 1, 0);
        match &tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(*threshold, 0.5),
            other => panic!("expected split at root, got {other:?}"),
        }
        assert_eq!(tree.predict(&[0.0]), 0.0);
        assert_eq!(tree.predict(&[1.0]), 1.0);
    }

    #[test]
    fn xor_resolves_with_depth_two() {
        let data = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels = [0, 1, 1, 0];
        let tree = train_tree(data.view(), &labels, &[0, 1, 2, 3], Some(2), 2, 0);
        for (row, want) in data.outer_iter().zip(labels) {
            assert_eq!(tree.predict(row.to_slice().unwrap()), want as f64);
        }
        assert!(tree.depth() >= 2);
    }

    #[test]
    fn constant_features_fall_back_to_mixed_leaf() {
        let data = array![[1.0], [1.0], [1.0]];
        let labels = [1, 0, 1];
        let tree = train_tree(data.view(), &labels, &[0, 1, 2], None, 1, 0);
        assert_eq!(tree.nodes.len(), 1);
        let p = tree.predict(&[1.0]);
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forest_predictions_bounded_and_separable_data_fit() {
        let n = 40;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let x = i as f64 / n as f64;
            rows.push(x);
            labels.push((x > 0.5) as u8);
        }
        let data = Array2::from_shape_vec((n, 1), rows).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let forest = train_forest(data.view(), &labels, &idx, &ForestParams::default(), 9);
        for i in 0..n {
            let p = forest.predict_proba(&[data[[i, 0]]]);
            assert!((0.0..=1.0).contains(&p));
            assert_eq!((p >= 0.5) as u8, labels[i]);
        }
    }

    #[test]
    fn single_sample_forest_predicts_its_label() {
        let data = array![[0.7]];
        let labels = [1];
        let params = ForestParams {
            trees_count: 1,
            ..ForestParams::default()
        };
        let forest = train_forest(data.view(), &labels, &[0], &params, 0);
        assert_eq!(forest.predict_proba(&[0.7]), 1.0);
    }

    #[test]
    fn forests_are_deterministic_per_seed() {
        let data = array![[0.1, 3.0], [0.9, 1.0], [0.4, 2.0], [0.6, 0.5]];
        let labels = [0, 1, 0, 1];
        let idx = [0, 1, 2, 3];
        let params = ForestParams {
            trees_count: 11,
            ..ForestParams::default()
        };
        let a = train_forest(data.view(), &labels, &idx, &params, 5);
        let b = train_forest(data.view(), &labels, &idx, &params, 5);
        assert_eq!(a, b);
        let c = train_forest(data.view(), &labels, &idx, &params, 6);
        assert_ne!(a, c);
    }
}
