//! Bootstrap-aggregated regression trees and permutation feature importance.

mod importance;
mod tree;

pub use importance::{
    permutation_importance, write_importance_csv, FeatureImportance, ImportanceReport,
};
pub use tree::{tree_fit, Node, RegressionTree, TreeConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, Regressor, Table};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_splits: usize,
    /// Features drawn per split; `None` means `ceil(p / 3)`.
    pub features_per_split: Option<usize>,
    pub min_leaf: usize,
    /// Disabling bootstrap trains every tree on the full sample (diagnostic).
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 253,
            max_splits: 710,
            features_per_split: None,
            min_leaf: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn tree(&self) -> TreeConfig {
        TreeConfig {
            max_splits: self.max_splits,
            features_per_split: self.features_per_split,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    /// Rows each tree never saw; not persisted.
    #[serde(skip)]
    pub oob_indices: Vec<Vec<usize>>,
}

impl Forest {
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x.len())?;
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict(x)?;
        }
        Ok(s / self.trees.len() as f64)
    }
}

impl Regressor for Forest {
    fn n_inputs(&self) -> usize {
        self.n_features
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.predict_one(input)?])
    }
}

/// Trains `n_trees` trees, each on a bootstrap resample drawn from its own
/// `(seed, tree index)` stream.
pub fn forest_fit(train: &Table, cfg: &ForestConfig) -> Result<Forest> {
    if cfg.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.n_outputs() != 1 {
        return Err(Error::Unsupported(format!(
            "forest regression is single-output, got {} targets",
            train.n_outputs()
        )));
    }
    let y = train.target_column(0);
    let n = train.len();
    let base = rng::derive_seed(cfg.seed, "bootstrap");
    let tree_cfg = cfg.tree();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut oob_indices = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut r = rng::indexed(base, t as u64);
        let rows: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| r.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut seen = vec![false; n];
        rows.iter().for_each(|&i| seen[i] = true);
        oob_indices.push((0..n).filter(|&i| !seen[i]).collect());
        trees.push(tree_fit(&train.inputs, &y, &rows, &tree_cfg, &mut r)?);
    }
    Ok(Forest {
        trees,
        n_features: train.n_inputs(),
        oob_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, seed: u64) -> Table {
        let mut r = rng::substream(seed, "forest");
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![r.random_range(0.0..10.0), r.random_range(0.0..1.0)])
            .collect();
        let targets = inputs
            .iter()
            .map(|x| x[0].sin() * 3.0 + x[1] + r.random_range(-0.5..0.5))
            .collect();
        Table::scalar(inputs, targets).unwrap()
    }

    #[test]
    fn single_tree_without_bootstrap_equals_tree() {
        let t = table(200, 1);
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = forest_fit(&t, &cfg).unwrap();
        let rows: Vec<usize> = (0..t.len()).collect();
        let mut r = rng::indexed(rng::derive_seed(0, "bootstrap"), 0);
        let tree = tree_fit(&t.inputs, &t.target_column(0), &rows, &cfg.tree(), &mut r).unwrap();
        assert_eq!(f.trees[0], tree);
        assert!(f.oob_indices[0].is_empty());
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let t = table(300, 2);
        let f = forest_fit(&t, &ForestConfig { n_trees: 7, ..ForestConfig::default() }).unwrap();
        for x in t.inputs.iter().take(20) {
            let mean = f.trees.iter().map(|tr| tr.predict(x).unwrap()).sum::<f64>() / 7.0;
            assert!((f.predict_one(x).unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_trees_predict_constant() {
        let leaf = RegressionTree {
            nodes: vec![Node::Leaf { value: 3.5 }],
            n_features: 2,
        };
        let f = Forest {
            trees: vec![leaf.clone(), leaf],
            n_features: 2,
            oob_indices: vec![],
        };
        assert_eq!(f.predict_one(&[9.0, -1.0]).unwrap(), 3.5);
        let two = Forest {
            trees: vec![
                RegressionTree { nodes: vec![Node::Leaf { value: 10.0 }], n_features: 1 },
                RegressionTree { nodes: vec![Node::Leaf { value: 20.0 }], n_features: 1 },
            ],
            n_features: 1,
            oob_indices: vec![],
        };
        assert_eq!(two.predict_one(&[0.0]).unwrap(), 15.0);
        assert!(two.predict_one(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn deterministic_and_oob_consistent() {
        let t = table(150, 3);
        let cfg = ForestConfig { n_trees: 5, seed: 9, ..ForestConfig::default() };
        let a = forest_fit(&t, &cfg).unwrap();
        let b = forest_fit(&t, &cfg).unwrap();
        assert_eq!(a, b);
        for oob in &a.oob_indices {
            // Expected out-of-bag share is about (1 - 1/n)^n ~ 0.37.
            let share = oob.len() as f64 / t.len() as f64;
            assert!(share > 0.2 && share < 0.55);
        }
    }

    #[test]
    fn rejects_multi_output_and_zero_trees() {
        let t = Table::new(vec![vec![1.0]], vec![vec![1.0, 2.0]]).unwrap();
        assert!(forest_fit(&t, &ForestConfig::default()).is_err());
        let t = table(10, 4);
        assert!(forest_fit(&t, &ForestConfig { n_trees: 0, ..ForestConfig::default() }).is_err());
    }
}
