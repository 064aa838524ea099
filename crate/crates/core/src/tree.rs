//! CART regression tree grown by greedy variance reduction.
//!
//! The only regulariser is `min_samples_leaf`. Bootstrap duplicates enter as
//! integer sample weights: they count with their multiplicity in leaf means
//! and split scores, while `min_samples_leaf` bounds the number of distinct
//! rows in a leaf (the scikit-learn convention for bagged trees).

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeHyperparams {
    pub min_samples_leaf: usize,
}

impl TreeHyperparams {
    pub fn new(min_samples_leaf: usize) -> Self {
        Self { min_samples_leaf }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Weighted mean of the training targets routed here.
        value: f64,
        /// Total sample weight routed here (row count for unweighted fits).
        count: usize,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Pre-order serialisation unit of a [`TreeNode`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatNode {
    Split { feature: usize, threshold: f64 },
    Leaf { value: f64, count: usize },
}

/// A fitted tree plus the bookkeeping the forest needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    root: TreeNode,
    n_features: usize,
    /// Total weighted squared-error reduction credited to each feature.
    impurity_decrease: Vec<f64>,
}

impl RegressionTree {
    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn impurity_decrease(&self) -> &[f64] {
        &self.impurity_decrease
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        self.check_dims(query)?;
        Ok(self.predict_unchecked(query))
    }

    /// Routes `query` down the tree; `value <= threshold` goes left.
    #[inline]
    pub(crate) fn predict_unchecked(&self, query: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if query[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Pre-order index (among leaves only) of the leaf `query` lands in.
    pub fn leaf_index(&self, query: &[f64]) -> Result<usize> {
        self.check_dims(query)?;
        let mut node = &self.root;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return Ok(offset),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if query[*feature] <= *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    fn check_dims(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.n_features {
            return Err(Error::Query(format!(
                "query has {} features, tree was fit on {}",
                query.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    pub fn to_preorder(&self) -> Vec<FlatNode> {
        fn walk(node: &TreeNode, out: &mut Vec<FlatNode>) {
            match node {
                TreeNode::Leaf { value, count } => out.push(FlatNode::Leaf {
                    value: *value,
                    count: *count,
                }),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(FlatNode::Split {
                        feature: *feature,
                        threshold: *threshold,
                    });
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Rebuilds a tree from its pre-order node list. Impurity bookkeeping is
    /// not part of the serialised form and comes back as zeros.
    pub fn from_preorder(nodes: &[FlatNode], n_features: usize) -> Result<Self> {
        fn take(
            it: &mut std::slice::Iter<'_, FlatNode>,
            n_features: usize,
        ) -> Result<TreeNode> {
            match it.next() {
                None => Err(Error::Format("truncated tree node list".into())),
                Some(&FlatNode::Leaf { value, count }) => Ok(TreeNode::Leaf { value, count }),
                Some(&FlatNode::Split { feature, threshold }) => {
                    if feature >= n_features {
                        return Err(Error::Format(format!(
                            "split on feature {feature} of {n_features}"
                        )));
                    }
                    let left = Box::new(take(it, n_features)?);
                    let right = Box::new(take(it, n_features)?);
                    Ok(TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    })
                }
            }
        }
        let mut it = nodes.iter();
        let root = take(&mut it, n_features)?;
        if it.next().is_some() {
            return Err(Error::Format("trailing nodes after tree".into()));
        }
        Ok(Self {
            root,
            n_features,
            impurity_decrease: vec![0.0; n_features],
        })
    }
}

/// Row indices sorted by each feature column.
pub(crate) fn presort(x: &FeatureMatrix) -> Vec<Vec<usize>> {
    (0..x.n_features())
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<usize> = (0..x.n_rows()).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Fits a tree. `sample_weights` are bootstrap multiplicities; rows with
/// weight zero are ignored.
pub fn fit_tree(
    x: &FeatureMatrix,
    targets: &[f64],
    hp: &TreeHyperparams,
    sample_weights: Option<&[u32]>,
) -> Result<RegressionTree> {
    check_fit_inputs(x, targets, hp)?;
    let weights: Vec<u32> = match sample_weights {
        Some(w) if w.len() != x.n_rows() => {
            return Err(Error::Fit(format!(
                "{} sample weights for {} rows",
                w.len(),
                x.n_rows()
            )))
        }
        Some(w) => w.to_vec(),
        None => vec![1; x.n_rows()],
    };
    if weights.iter().all(|&w| w == 0) {
        return Err(Error::Fit("all sample weights are zero".into()));
    }
    Ok(fit_presorted(x, targets, &weights, hp.min_samples_leaf, &presort(x)))
}

pub(crate) fn check_fit_inputs(x: &FeatureMatrix, targets: &[f64], hp: &TreeHyperparams) -> Result<()> {
    if hp.min_samples_leaf == 0 {
        return Err(Error::Config("min_samples_leaf must be >= 1".into()));
    }
    if targets.len() != x.n_rows() {
        return Err(Error::Fit(format!(
            "{} targets for {} rows",
            targets.len(),
            x.n_rows()
        )));
    }
    if x.n_rows() < hp.min_samples_leaf {
        return Err(Error::Fit(format!(
            "{} rows is fewer than min_samples_leaf = {}",
            x.n_rows(),
            hp.min_samples_leaf
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Fit("non-finite target".into()));
    }
    if x.columns().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite feature value".into()));
    }
    Ok(())
}

/// Grows a tree from per-feature sorted row orders. Callers guarantee at
/// least one positive weight. A `min_samples_leaf` above the number of
/// positively weighted rows simply yields a single leaf.
pub(crate) fn fit_presorted(
    x: &FeatureMatrix,
    targets: &[f64],
    weights: &[u32],
    min_samples_leaf: usize,
    sorted: &[Vec<usize>],
) -> RegressionTree {
    let lists: Vec<Vec<usize>> = sorted
        .iter()
        .map(|order| order.iter().copied().filter(|&r| weights[r] > 0).collect())
        .collect();
    let mut builder = Builder {
        x,
        targets,
        weights,
        min_samples_leaf,
        goes_left: vec![false; x.n_rows()],
        impurity_decrease: vec![0.0; x.n_features()],
    };
    let root = builder.grow(lists);
    RegressionTree {
        root,
        n_features: x.n_features(),
        impurity_decrease: builder.impurity_decrease,
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    targets: &'a [f64],
    weights: &'a [u32],
    min_samples_leaf: usize,
    goes_left: Vec<bool>,
    impurity_decrease: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    sse: f64,
}

impl Builder<'_> {
    fn grow(&mut self, lists: Vec<Vec<usize>>) -> TreeNode {
        let rows = &lists[0];
        let mut total_w = 0.0;
        let mut sum = 0.0;
        for &r in rows {
            let w = f64::from(self.weights[r]);
            total_w += w;
            sum += w * self.targets[r];
        }
        let mean = sum / total_w;
        let leaf = TreeNode::Leaf {
            value: mean,
            count: total_w as usize,
        };

        let first = self.targets[rows[0]];
        if rows.len() < 2 * self.min_samples_leaf || rows.iter().all(|&r| self.targets[r] == first)
        {
            return leaf;
        }
        let node_sse: f64 = rows
            .iter()
            .map(|&r| f64::from(self.weights[r]) * (self.targets[r] - mean).powi(2))
            .sum();

        let Some(best) = self.best_split(&lists, mean, total_w, node_sse) else {
            return leaf;
        };
        self.impurity_decrease[best.feature] += (node_sse - best.sse).max(0.0);

        let col = self.x.column(best.feature);
        for &r in rows {
            self.goes_left[r] = col[r] <= best.threshold;
        }
        let (left_lists, right_lists): (Vec<_>, Vec<_>) = lists
            .into_iter()
            .map(|list| {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    list.into_iter().partition(|&r| self.goes_left[r]);
                (l, r)
            })
            .unzip();
        let left = Box::new(self.grow(left_lists));
        let right = Box::new(self.grow(right_lists));
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        }
    }

    /// Minimises the summed child squared error over all legal
    /// (feature, midpoint) candidates. Earlier features and lower thresholds
    /// win ties.
    fn best_split(
        &self,
        lists: &[Vec<usize>],
        mean: f64,
        total_w: f64,
        node_sse: f64,
    ) -> Option<BestSplit> {
        let tie_tol = 1e-12 * node_sse;
        let mut best: Option<BestSplit> = None;
        for (feature, list) in lists.iter().enumerate() {
            let col = self.x.column(feature);
            let (mut wl, mut sl, mut s2l) = (0.0, 0.0, 0.0);
            for i in 0..list.len() - 1 {
                let r = list[i];
                let w = f64::from(self.weights[r]);
                let d = self.targets[r] - mean;
                wl += w;
                sl += w * d;
                s2l += w * d * d;
                let (v, next) = (col[r], col[list[i + 1]]);
                // Rows 0..=i go left.
                if v == next || i + 1 < self.min_samples_leaf {
                    continue;
                }
                if list.len() - (i + 1) < self.min_samples_leaf {
                    break;
                }
                let wr = total_w - wl;
                // Centred sums: the right side's linear sum is -sl.
                let sse_left = (s2l - sl * sl / wl).max(0.0);
                let sse_right = ((node_sse - s2l) - sl * sl / wr).max(0.0);
                let sse = sse_left + sse_right;
                if best.as_ref().map_or(true, |b| sse < b.sse - tie_tol) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        sse,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_tree() -> RegressionTree {
        let x = FeatureMatrix::single(vec![0.0, 1.0, 2.0, 3.0]);
        fit_tree(&x, &[0.0, 0.0, 10.0, 10.0], &TreeHyperparams::new(1), None).unwrap()
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = FeatureMatrix::single(vec![3.0, 1.0, 2.0, 5.0]);
        let t = fit_tree(&x, &[5.0; 4], &TreeHyperparams::new(1), None).unwrap();
        assert_eq!(t.root(), &TreeNode::Leaf { value: 5.0, count: 4 });
        assert_eq!(t.impurity_decrease(), &[0.0]);
    }

    #[test]
    fn step_targets_split_at_midpoint() {
        let t = line_tree();
        match t.root() {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
                assert_eq!(**left, TreeNode::Leaf { value: 0.0, count: 2 });
                assert_eq!(**right, TreeNode::Leaf { value: 10.0, count: 2 });
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
        assert_eq!(t.impurity_decrease(), &[100.0]);
    }

    #[test]
    fn leaf_size_equal_to_rows_averages_everything() {
        let x = FeatureMatrix::single(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [1.0, 4.0, 2.0, 8.0, 5.0];
        let t = fit_tree(&x, &y, &TreeHyperparams::new(5), None).unwrap();
        assert_eq!(t.root(), &TreeNode::Leaf { value: 4.0, count: 5 });
    }

    #[test]
    fn too_few_rows_is_fit_error() {
        let x = FeatureMatrix::single(vec![0.0, 1.0]);
        let err = fit_tree(&x, &[0.0, 1.0], &TreeHyperparams::new(3), None).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn queries_route_left_on_equality_and_clamp_outside() {
        let t = line_tree();
        assert_eq!(t.predict(&[0.7]).unwrap(), 0.0);
        assert_eq!(t.predict(&[1.5]).unwrap(), 0.0);
        assert_eq!(t.predict(&[100.0]).unwrap(), 10.0);
        assert_eq!(t.predict(&[-100.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_leaf_predicts_its_value_anywhere() {
        let x = FeatureMatrix::single(vec![0.0, 1.0]);
        let t = fit_tree(&x, &[2.0, 4.0], &TreeHyperparams::new(2), None).unwrap();
        for q in [-1e9, 0.0, 0.5, 1e9] {
            assert_eq!(t.predict(&[q]).unwrap(), 3.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_query_error() {
        let t = line_tree();
        assert!(matches!(t.predict(&[1.0, 2.0]), Err(Error::Query(_))));
    }

    #[test]
    fn leaf_size_counts_distinct_rows() {
        let x = FeatureMatrix::single(vec![0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        // Weight 4 on row 0 does not make it satisfy min_samples_leaf = 2 alone.
        let t = fit_tree(&x, &y, &TreeHyperparams::new(2), Some(&[4, 0, 1, 1])).unwrap();
        assert_eq!(t.root(), &TreeNode::Leaf { value: 10.0 / 3.0, count: 6 });
        let t = fit_tree(&x, &y, &TreeHyperparams::new(1), Some(&[4, 0, 1, 1])).unwrap();
        assert_eq!(t.root().n_leaves(), 2);
    }

    #[test]
    fn unit_leaf_weights_act_like_duplicated_rows() {
        let x = FeatureMatrix::single(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [1.0, 3.0, 2.0, 7.0, 6.0];
        let w = [2, 0, 1, 3, 1];
        let weighted = fit_tree(&x, &y, &TreeHyperparams::new(1), Some(&w)).unwrap();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (r, &k) in w.iter().enumerate() {
            for _ in 0..k {
                xs.push(x.get(r, 0));
                ys.push(y[r]);
            }
        }
        let copied =
            fit_tree(&FeatureMatrix::single(xs), &ys, &TreeHyperparams::new(1), None).unwrap();
        assert_eq!(weighted.root(), copied.root());
    }

    #[test]
    fn preorder_round_trip() {
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 5.0],
            vec![1.0, 3.0],
            vec![2.0, 4.0],
            vec![3.0, 1.0],
            vec![4.0, 0.0],
        ])
        .unwrap();
        let t = fit_tree(&x, &[1.0, 2.0, 0.5, 9.0, 8.0], &TreeHyperparams::new(1), None).unwrap();
        let back = RegressionTree::from_preorder(&t.to_preorder(), 2).unwrap();
        assert_eq!(back.root(), t.root());
        assert!(RegressionTree::from_preorder(&t.to_preorder()[1..], 2).is_err());
    }

    #[test]
    fn leaf_sizes_respect_minimum() {
        let n = 57;
        let x = FeatureMatrix::single((0..n).map(|i| i as f64).collect());
        let y: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64).collect();
        for msl in [1, 3, 7, 20] {
            let t = fit_tree(&x, &y, &TreeHyperparams::new(msl), None).unwrap();
            fn check(node: &TreeNode, msl: usize) {
                match node {
                    TreeNode::Leaf { count, .. } => assert!(*count >= msl),
                    TreeNode::Split { left, right, .. } => {
                        check(left, msl);
                        check(right, msl);
                    }
                }
            }
            check(t.root(), msl);
        }
    }
}
