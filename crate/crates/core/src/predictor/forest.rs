//! Bagged regression trees with random feature subsets per split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::predictor::tree::{Tree, TreeBuilder};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<T> {
    n_features: usize,
    trees: Vec<Tree<T>>,
}

impl<T: Scalar> Forest<T> {
    /// Each tree sees a bootstrap sample and `max(1, ⌊√d⌋)` candidate
    /// features per split. Tree `t` draws from its own RNG stream, so the
    /// result does not depend on thread scheduling.
    pub fn fit(x: &Matrix<T>, y: &[T], config: &ForestConfig) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InsufficientData(format!("forest needs 2 rows, got {n}")));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
        }
        if config.trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        let d = x.ncols();
        let mtry = ((d as f64).sqrt().floor() as usize).max(1);
        let trees = (0..config.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                TreeBuilder::new(x, &boot).fit(y, config.max_depth, mtry, &mut rng)
            })
            .collect();
        Ok(Self { n_features: d, trees })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.trees.iter().map(|t| t.predict(x)).sum::<T>() / T::from_usize_lossy(self.trees.len())
    }
}
