//! Gradient boosting of regression trees on squared loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::predictor::tree::{Tree, TreeBuilder};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            trees: 500,
            max_depth: 5,
            shrinkage: 0.05,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm<T> {
    n_features: usize,
    init: T,
    shrinkage: T,
    trees: Vec<Tree<T>>,
    /// Training MSE after initialization and after every round.
    train_mse: Vec<T>,
}

impl<T: Scalar> Gbm<T> {
    /// Starts from the label mean and adds `shrinkage ×` a depth-limited tree
    /// fit to the current residuals, over all rows and features.
    pub fn fit(x: &Matrix<T>, y: &[T], config: &GbmConfig) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InsufficientData(format!("boosting needs 2 rows, got {n}")));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
        }
        if !(config.shrinkage > 0.0 && config.shrinkage <= 1.0) {
            return Err(Error::InvalidConfig(format!("shrinkage {} outside (0,1]", config.shrinkage)));
        }
        let eta = T::lit(config.shrinkage);
        let init = mean(y);
        let all: Vec<usize> = (0..n).collect();
        let builder = TreeBuilder::new(x, &all);
        // Every feature is a split candidate, so the RNG is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fitted = vec![init; n];
        let mse = |f: &[T]| f.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::from_usize_lossy(n);
        let mut train_mse = vec![mse(&fitted)];
        let mut trees = Vec::with_capacity(config.trees);
        for _ in 0..config.trees {
            let resid: Vec<T> = y.iter().zip(&fitted).map(|(&a, &b)| a - b).collect();
            let tree = builder.fit(&resid, config.max_depth, x.ncols(), &mut rng);
            for (i, f) in fitted.iter_mut().enumerate() {
                *f += eta * tree.predict(x.row(i));
            }
            train_mse.push(mse(&fitted));
            trees.push(tree);
        }
        Ok(Self {
            n_features: x.ncols(),
            init,
            shrinkage: eta,
            trees,
            train_mse,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn train_mse(&self) -> &[T] {
        &self.train_mse
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.init + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<T>()
    }
}
