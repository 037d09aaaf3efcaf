use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, RegressionTree};
use super::Dataset;
use crate::stats::mix_seed;
use crate::{Error, Result};

/// Features tried at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(F / 3)`.
    Third,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Third => n_features.div_ceil(3),
            MaxFeatures::All => n_features,
            MaxFeatures::Count(m) => m.clamp(1, n_features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until the leaf and split limits stop it.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    /// Off trains every tree on all rows in order.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: MaxFeatures::Third,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn label(&self) -> String {
        let depth = self.max_depth.map_or("none".to_string(), |d| d.to_string());
        let mf = match self.max_features {
            MaxFeatures::Third => "third".to_string(),
            MaxFeatures::All => "all".to_string(),
            MaxFeatures::Count(m) => m.to_string(),
        };
        format!(
            "trees={} depth={} leaf={} split={} features={}",
            self.n_trees, depth, self.min_samples_leaf, self.min_samples_split, mf
        )
    }
}

/// Cartesian product of the standard tuning values, 144 cells.
pub fn default_grid() -> Vec<ForestParams> {
    let mut grid = Vec::new();
    for n_trees in [100, 300, 500] {
        for max_depth in [Some(4), Some(8), Some(16), None] {
            for min_samples_leaf in [1, 5, 20] {
                for min_samples_split in [2, 10] {
                    for max_features in [MaxFeatures::Third, MaxFeatures::All] {
                        grid.push(ForestParams {
                            n_trees,
                            max_depth,
                            min_samples_leaf,
                            min_samples_split,
                            max_features,
                            bootstrap: true,
                        });
                    }
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub seed: u64,
}

/// Tree `k` draws its bootstrap sample and node seeds from `mix_seed(seed, k)`,
/// so the result does not depend on thread scheduling.
pub fn fit_forest(data: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    data.validate()?;
    if params.n_trees == 0 {
        return Err(Error::CrossValidation("forest needs at least one tree".into()));
    }
    let q = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let tree_seed = mix_seed(seed, k as u64);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                (0..q).map(|_| rng.gen_range(0..q)).collect()
            } else {
                (0..q).collect()
            };
            fit_tree(data, &rows, params, mix_seed(tree_seed, 0x7EE))
        })
        .collect();
    Ok(ForestModel {
        trees,
        params: *params,
        feature_names: data.feature_names.clone(),
        seed,
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Prediction {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Predictions for every row of column-major `x`.
    pub fn predict_columns(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Prediction {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        let q = x.first().map_or(0, |c| c.len());
        let k = self.trees.len() as f64;
        Ok((0..q)
            .map(|i| self.trees.iter().map(|t| t.predict_col(x, i)).sum::<f64>() / k)
            .collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_columns(&data.x)
    }
}
