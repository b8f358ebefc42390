//! Dataset embeddings aggregated from probe features, and pairwise dataset
//! similarity by correlation distance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_real, CsvOut, Table};
use crate::registry::{SampleFeatureMatrix, Zoo};
use crate::scalar::{dot, mean, Scalar};
use crate::Real;

pub const EMBEDDINGS_DIR: &str = "embeddings";
pub const SIMILARITY_FILE: &str = "similarity.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Aggregated,
    Ingested,
}

/// How sample rows are pooled into one dataset vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Column-wise sum over samples.
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEmbedding {
    pub dataset_id: String,
    pub vector: Vec<Real>,
    pub source: EmbeddingSource,
}

/// Column sums of a row-major sample block.
pub fn column_sums<T: Scalar>(rows: &crate::linalg::Matrix<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); rows.ncols()];
    for i in 0..rows.nrows() {
        for (a, &x) in acc.iter_mut().zip(rows.row(i)) {
            *a += x;
        }
    }
    acc
}

pub fn aggregate_features(features: &SampleFeatureMatrix, how: Aggregation) -> Result<DatasetEmbedding> {
    let n = features.rows.nrows();
    if n == 0 || features.rows.ncols() == 0 {
        return Err(Error::EmptyInput(format!(
            "feature matrix for {} has no samples",
            features.dataset_id
        )));
    }
    let mut vector = column_sums(&features.rows);
    if how == Aggregation::Mean {
        let n = n as Real;
        vector.iter_mut().for_each(|v| *v /= n);
    }
    Ok(DatasetEmbedding {
        dataset_id: features.dataset_id.clone(),
        vector,
        source: EmbeddingSource::Aggregated,
    })
}

/// `1 − centered cosine(u, v)`, in `[0, 2]`.
pub fn correlation_distance<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(Error::DegenerateVector("need at least 2 coordinates".into()));
    }
    let (mu, mv) = (mean(u), mean(v));
    let cu: Vec<T> = u.iter().map(|&x| x - mu).collect();
    let cv: Vec<T> = v.iter().map(|&x| x - mv).collect();
    let nu = dot(&cu, &cu).sqrt();
    let nv = dot(&cv, &cv).sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::DegenerateVector("constant vector has zero centered norm".into()));
    }
    let cos = dot(&cu, &cv) / (nu * nv);
    let one = T::one();
    Ok((one - cos).max(T::zero()).min(one + one))
}

/// Pairwise dataset similarity `φ = 1 − correlation distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    dataset_ids: Vec<String>,
    phi: Vec<Vec<Real>>,
    index: BTreeMap<String, usize>,
}

impl SimilarityMatrix {
    pub fn from_parts(dataset_ids: Vec<String>, phi: Vec<Vec<Real>>) -> Result<Self> {
        let k = dataset_ids.len();
        if phi.len() != k || phi.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("similarity matrix is not {k}x{k}")));
        }
        let index = dataset_ids.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        Ok(Self {
            dataset_ids,
            phi,
            index,
        })
    }

    pub fn dataset_ids(&self) -> &[String] {
        &self.dataset_ids
    }

    pub fn rows(&self) -> &[Vec<Real>] {
        &self.phi
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<Real> {
        Some(self.phi[*self.index.get(a)?][*self.index.get(b)?])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["dataset_a", "dataset_b", "phi"])?;
        for (i, a) in self.dataset_ids.iter().enumerate() {
            for (j, b) in self.dataset_ids.iter().enumerate() {
                out.row(&[a.clone(), b.clone(), fmt_real(self.phi[i][j])])?;
            }
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        t.expect_header(&["dataset_a", "dataset_b", "phi"])?;
        let mut ids: Vec<String> = Vec::new();
        let mut entries = Vec::with_capacity(t.rows.len());
        for (line, rec) in &t.rows {
            let a = t.field(*line, rec, 0)?.to_owned();
            let b = t.field(*line, rec, 1)?.to_owned();
            let phi: Real = t.parse(*line, rec, 2)?;
            for id in [&a, &b] {
                if !ids.contains(id) {
                    ids.push(id.clone());
                }
            }
            entries.push((a, b, phi));
        }
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let k = ids.len();
        let mut phi = vec![vec![Real::NAN; k]; k];
        for (a, b, v) in &entries {
            phi[index[a.as_str()]][index[b.as_str()]] = *v;
        }
        for (i, row) in phi.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        if phi.iter().flatten().any(|v| v.is_nan()) {
            return Err(t.parse_error(0, "similarity file does not cover every dataset pair"));
        }
        Self::from_parts(ids, phi)
    }
}

pub fn similarity_matrix(embeddings: &[DatasetEmbedding]) -> Result<SimilarityMatrix> {
    if embeddings.len() < 2 {
        return Err(Error::InsufficientData("similarity needs at least 2 datasets".into()));
    }
    let dim = embeddings[0].vector.len();
    if let Some(e) = embeddings.iter().find(|e| e.vector.len() != dim) {
        return Err(Error::Shape(format!(
            "embedding of {} has dimension {}, expected {dim}",
            e.dataset_id,
            e.vector.len()
        )));
    }
    // Rejects degenerate embeddings up front so the error names the dataset.
    for e in embeddings {
        correlation_distance(&e.vector, &e.vector)
            .map_err(|err| Error::DegenerateVector(format!("dataset {}: {err}", e.dataset_id)))?;
    }
    let k = embeddings.len();
    let mut phi = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = correlation_distance(&embeddings[i].vector, &embeddings[j].vector)?;
            phi[i][j] = 1.0 - d;
            phi[j][i] = phi[i][j];
        }
    }
    SimilarityMatrix::from_parts(embeddings.iter().map(|e| e.dataset_id.clone()).collect(), phi)
}

/// Embeds every zoo dataset that has probe features.
pub fn zoo_embeddings(zoo: &Zoo, how: Aggregation) -> Result<Vec<DatasetEmbedding>> {
    zoo.datasets()
        .iter()
        .filter_map(|d| zoo.features().get(&d.dataset_id))
        .map(|f| aggregate_features(f, how))
        .collect()
}

pub fn write_embedding(dir: &Path, e: &DatasetEmbedding) -> Result<()> {
    let header: Vec<String> = (0..e.vector.len()).map(|j| format!("v{j}")).collect();
    let mut out = CsvOut::create(&dir.join(format!("{}.csv", e.dataset_id)), &header)?;
    let row: Vec<String> = e.vector.iter().map(|&v| fmt_real(v)).collect();
    out.row(&row)?;
    out.finish()
}

/// Reads precomputed dataset embeddings from `dir/<dataset_id>.csv`.
pub fn read_embeddings(dir: &Path) -> Result<Vec<DatasetEmbedding>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let t = Table::read(p)?;
            let rows = t.real_rows()?;
            let vector = match rows.as_slice() {
                [row] => row.clone(),
                _ => return Err(t.parse_error(0, "embedding file must hold exactly one row")),
            };
            Ok(DatasetEmbedding {
                dataset_id: p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned(),
                vector,
                source: EmbeddingSource::Ingested,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emb(id: &str, v: &[f64]) -> DatasetEmbedding {
        DatasetEmbedding {
            dataset_id: id.into(),
            vector: v.to_vec(),
            source: EmbeddingSource::Ingested,
        }
    }

    #[test]
    fn aggregate_sums_columns() {
        let f = SampleFeatureMatrix::new("d", Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        assert_eq!(aggregate_features(&f, Aggregation::Sum).unwrap().vector, vec![4.0, 6.0]);
        assert_eq!(aggregate_features(&f, Aggregation::Mean).unwrap().vector, vec![2.0, 3.0]);
        let single = SampleFeatureMatrix::new("d", Matrix::from_rows(&[[5.0, -1.0]]).unwrap());
        assert_eq!(aggregate_features(&single, Aggregation::Sum).unwrap().vector, vec![5.0, -1.0]);
    }

    #[test]
    fn aggregate_rejects_empty() {
        let f = SampleFeatureMatrix::new("d", Matrix::zeros(0, 3));
        assert!(matches!(aggregate_features(&f, Aggregation::Sum), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn correlation_distance_hand_cases() {
        let u = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(correlation_distance(&u, &u).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(correlation_distance(&u, &[3.0, 2.0, 1.0]).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            correlation_distance(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn correlation_distance_in_f32() {
        let d: f32 = correlation_distance(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((d - 0.2).abs() < 1e-6);
    }

    #[test]
    fn constant_vector_is_degenerate() {
        assert!(matches!(
            correlation_distance(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn similarity_hand_cases() {
        let s = similarity_matrix(&[emb("a", &[1.0, 2.0, 3.0]), emb("b", &[1.0, 2.0, 3.0])]).unwrap();
        assert_abs_diff_eq!(s.get("a", "b").unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(s.get("a", "a").unwrap(), 1.0);
        let s = similarity_matrix(&[emb("a", &[1.0, 2.0, 3.0]), emb("b", &[3.0, 2.0, 1.0])]).unwrap();
        assert_abs_diff_eq!(s.get("a", "b").unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn similarity_names_degenerate_dataset() {
        let err = similarity_matrix(&[emb("a", &[1.0, 2.0]), emb("flat", &[4.0, 4.0])]).unwrap_err();
        assert!(err.to_string().contains("flat"), "{err}");
    }

    proptest! {
        #[test]
        fn affine_invariance(
            u in prop::collection::vec(-10.0f64..10.0, 5),
            v in prop::collection::vec(-10.0f64..10.0, 5),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let base = correlation_distance(&u, &v);
            prop_assume!(base.is_ok());
            let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let moved = correlation_distance(&u, &w).unwrap();
            prop_assert!((base.unwrap() - moved).abs() < 1e-9);
        }

        #[test]
        fn aggregation_is_permutation_invariant(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_features(&SampleFeatureMatrix::new("d", Matrix::from_rows(&rows).unwrap()), Aggregation::Sum).unwrap();
            let b = aggregate_features(&SampleFeatureMatrix::new("d", Matrix::from_rows(&shuffled).unwrap()), Aggregation::Sum).unwrap();
            for (x, y) in a.vector.iter().zip(&b.vector) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
