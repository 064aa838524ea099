//! Bootstrap ensemble of regression trees.
//!
//! Every tree sees its own multiset of `N` rows drawn with replacement. The
//! ensemble mean is the prediction and the population standard deviation of
//! the member predictions is its uncertainty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::tree::{self, RegressionTree, TreeHyperparams};

pub const DEFAULT_N_TREES: usize = 125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_N_TREES,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    pub fn new(n_trees: usize, min_samples_leaf: usize, seed: u64) -> Self {
        Self {
            n_trees,
            min_samples_leaf,
            seed,
        }
    }

    pub fn with_min_samples_leaf(mut self, min_samples_leaf: usize) -> Self {
        self.min_samples_leaf = min_samples_leaf;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionWithUncertainty {
    pub mean: f64,
    pub std: f64,
}

impl PredictionWithUncertainty {
    /// Mean and population standard deviation of `values`.
    pub fn from_members(values: &[f64]) -> Self {
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Self {
                mean: first,
                std: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub(crate) trees: Vec<RegressionTree>,
    pub(crate) hyperparams: ForestHyperparams,
    pub(crate) n_features: usize,
    pub(crate) importances: Vec<f64>,
    /// Per tree, `true` for training rows left out of its bootstrap draw.
    /// Empty for models loaded from disk.
    pub(crate) out_of_bag: Vec<Vec<bool>>,
}

/// Independent stream for tree `index`: adding trees never reshuffles the
/// draws of earlier ones.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn bootstrap_counts(n_rows: usize, seed: u64, index: usize) -> Vec<u32> {
    let mut rng = tree_rng(seed, index);
    let mut counts = vec![0u32; n_rows];
    for _ in 0..n_rows {
        counts[rng.random_range(0..n_rows)] += 1;
    }
    counts
}

pub fn fit_forest(x: &FeatureMatrix, targets: &[f64], hp: &ForestHyperparams) -> Result<ForestModel> {
    hp.validate()?;
    tree::check_fit_inputs(x, targets, &TreeHyperparams::new(hp.min_samples_leaf))?;
    Ok(fit_forest_unchecked(x, targets, hp))
}

/// Skips the `rows >= min_samples_leaf` precondition. Resampling loops use
/// this so an oversized leaf on a small fold degrades to a single leaf.
pub(crate) fn fit_forest_unchecked(
    x: &FeatureMatrix,
    targets: &[f64],
    hp: &ForestHyperparams,
) -> ForestModel {
    let n_rows = x.n_rows();
    let sorted = tree::presort(x);
    let fitted: Vec<(RegressionTree, Vec<bool>)> = (0..hp.n_trees)
        .into_par_iter()
        .map(|i| {
            let counts = bootstrap_counts(n_rows, hp.seed, i);
            let tree = tree::fit_presorted(x, targets, &counts, hp.min_samples_leaf, &sorted);
            (tree, counts.iter().map(|&c| c == 0).collect())
        })
        .collect();
    let (trees, out_of_bag): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let importances = normalized_importances(&trees, x.n_features());
    ForestModel {
        trees,
        hyperparams: *hp,
        n_features: x.n_features(),
        importances,
        out_of_bag,
    }
}

/// Each tree's decreases are normalised to sum to one, averaged over trees
/// and renormalised. A forest without any split gets uniform importances.
pub(crate) fn normalized_importances(trees: &[RegressionTree], n_features: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_features];
    for t in trees {
        let total: f64 = t.impurity_decrease().iter().sum();
        if total > 0.0 {
            for (a, d) in acc.iter_mut().zip(t.impurity_decrease()) {
                *a += d / total;
            }
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    } else {
        vec![1.0 / n_features as f64; n_features]
    }
}

impl ForestModel {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &ForestHyperparams {
        &self.hyperparams
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn has_out_of_bag(&self) -> bool {
        !self.out_of_bag.is_empty()
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        if n != self.n_features {
            return Err(Error::Query(format!(
                "query has {n} features, forest was fit on {}",
                self.n_features
            )));
        }
        Ok(())
    }

    pub fn tree_predictions(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(query.len())?;
        Ok(self.trees.iter().map(|t| t.predict_unchecked(query)).collect())
    }

    pub fn predict(&self, query: &[f64]) -> Result<PredictionWithUncertainty> {
        Ok(PredictionWithUncertainty::from_members(&self.tree_predictions(query)?))
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<PredictionWithUncertainty>> {
        self.check_dims(x.n_features())?;
        let mut query = vec![0.0; self.n_features];
        let mut members = vec![0.0; self.trees.len()];
        Ok((0..x.n_rows())
            .map(|r| {
                for (j, q) in query.iter_mut().enumerate() {
                    *q = x.get(r, j);
                }
                for (m, t) in members.iter_mut().zip(&self.trees) {
                    *m = t.predict_unchecked(&query);
                }
                PredictionWithUncertainty::from_members(&members)
            })
            .collect())
    }

    /// Predictions for the training rows using, for each row, only the
    /// trees whose bootstrap draw missed it. Rows drawn by every tree fall
    /// back to the full ensemble.
    pub fn predict_out_of_bag(&self, x_train: &FeatureMatrix) -> Result<Vec<PredictionWithUncertainty>> {
        self.check_dims(x_train.n_features())?;
        if !self.has_out_of_bag() {
            return Err(Error::Query("model carries no out-of-bag record".into()));
        }
        let n_rows = self.out_of_bag[0].len();
        if x_train.n_rows() != n_rows {
            return Err(Error::Query(format!(
                "out-of-bag prediction needs the {n_rows} training rows, got {}",
                x_train.n_rows()
            )));
        }
        let mut members = Vec::with_capacity(self.trees.len());
        Ok((0..n_rows)
            .map(|r| {
                let query = x_train.row(r);
                members.clear();
                members.extend(
                    self.trees
                        .iter()
                        .zip(&self.out_of_bag)
                        .filter(|(_, oob)| oob[r])
                        .map(|(t, _)| t.predict_unchecked(&query)),
                );
                if members.is_empty() {
                    members.extend(self.trees.iter().map(|t| t.predict_unchecked(&query)));
                }
                PredictionWithUncertainty::from_members(&members)
            })
            .collect())
    }
}

pub fn predict_forest(model: &ForestModel, query: &[f64]) -> Result<PredictionWithUncertainty> {
    model.predict(query)
}

pub fn feature_importances(model: &ForestModel) -> Vec<f64> {
    model.importances.clone()
}
