//! Ridge regression on standardized features, solved by normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{dot, mean, Scalar};

pub const DEFAULT_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge<T> {
    n_features: usize,
    /// Indices of features with nonzero training spread.
    kept: Vec<usize>,
    mean: Vec<T>,
    scale: Vec<T>,
    /// Weights on standardized kept features.
    weights: Vec<T>,
    y_mean: T,
    lambda: T,
}

impl<T: Scalar> Ridge<T> {
    /// Minimizes `‖Zw − (y − ȳ)‖² + λ‖w‖²` over standardized features `Z`.
    /// Features with zero training spread are dropped.
    pub fn fit(x: &Matrix<T>, y: &[T], lambda: T) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if n < 2 {
            return Err(Error::InsufficientData(format!("ridge needs 2 rows, got {n}")));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite training data".into()));
        }
        let nf = T::from_usize_lossy(n);
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for f in 0..d {
            let col: Vec<T> = (0..n).map(|i| x[(i, f)]).collect();
            let m = mean(&col);
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / nf;
            let sd = var.sqrt();
            if sd > T::epsilon() * T::lit(64.0) * (T::one() + m.abs()) {
                kept.push(f);
                means.push(m);
                scales.push(sd);
            }
        }
        let y_mean = mean(y);
        let k = kept.len();
        let z = Matrix::from_row_major(
            n,
            k,
            (0..n)
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .map(|(i, j)| (x[(i, kept[j])] - means[j]) / scales[j])
                .collect(),
        )?;
        let weights = if k == 0 {
            Vec::new()
        } else {
            let mut a = z.gram();
            for j in 0..k {
                a[(j, j)] += lambda;
            }
            let yc: Vec<T> = y.iter().map(|&v| v - y_mean).collect();
            Cholesky::new(&a)?.solve(&z.tr_mul_vec(&yc))
        };
        Ok(Self {
            n_features: d,
            kept,
            mean: means,
            scale: scales,
            weights,
            y_mean,
            lambda,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Coefficients on the original feature scale; dropped features get 0.
    pub fn coefficients(&self) -> Vec<T> {
        let mut c = vec![T::zero(); self.n_features];
        for (j, &f) in self.kept.iter().enumerate() {
            c[f] = self.weights[j] / self.scale[j];
        }
        c
    }

    pub fn intercept(&self) -> T {
        self.y_mean
            - self
                .kept
                .iter()
                .enumerate()
                .map(|(j, _)| self.weights[j] * self.mean[j] / self.scale[j])
                .sum::<T>()
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        let z: Vec<T> = self
            .kept
            .iter()
            .enumerate()
            .map(|(j, &f)| (x[f] - self.mean[j]) / self.scale[j])
            .collect();
        self.y_mean + dot(&self.weights, &z)
    }
}
