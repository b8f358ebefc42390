//! LogME-style transferability: the maximized Bayesian linear-regression
//! evidence of target labels given features a model extracts.
//!
//! With prior `w ~ N(0, α⁻¹I)` and noise precision `β`, the evidence of
//! labels `y` given features `R` (n×d) is
//!
//! ```text
//! ln p(y|R,α,β) = d/2 ln α + n/2 ln β − n/2 ln 2π − ½ ln det A
//!                 − β/2 ‖y − R m‖² − α/2 ‖m‖²
//! A = αI + βRᵀR,  m = βA⁻¹Rᵀy
//! ```
//!
//! [`maximize_evidence`] runs the fixed-point updates `α ← γ/‖m‖²`,
//! `β ← (n − γ)/‖y − Rm‖²` with `γ = Σ βσᵢ²/(α + βσᵢ²)`, evaluated in the
//! eigenbasis of `RᵀR` so each iteration costs O(nd + d²).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Table;
use crate::linalg::{symmetric_eigen, Cholesky, Matrix};
use crate::scalar::{all_finite, dot, Scalar};
use crate::Real;

pub const MAX_ITERATIONS: usize = 200;
pub const TOLERANCE: f64 = 1e-8;
/// α used when the posterior mean collapses to zero.
pub const ALPHA_ON_ZERO_MEAN: f64 = 1e6;
/// Upper bound on β; reached when labels are fit exactly.
pub const BETA_MAX: f64 = 1e12;

pub const LOGME_DIR: &str = "logme";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMethod {
    Logme,
    Ingested,
}

impl fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferMethod::Logme => "logme",
            TransferMethod::Ingested => "ingested",
        })
    }
}

impl FromStr for TransferMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "logme" => Ok(TransferMethod::Logme),
            "ingested" => Ok(TransferMethod::Ingested),
            other => Err(format!("unknown transfer method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub method: TransferMethod,
    pub score: Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceState<T> {
    pub alpha: T,
    pub beta: T,
    /// Posterior mean of the weights.
    pub m: Vec<T>,
    pub log_evidence: T,
    /// `log_evidence / n`.
    pub score: T,
    pub iterations: usize,
    /// Log evidence after every iteration, in order.
    pub trace: Vec<T>,
    /// β after every iteration, in order.
    pub beta_trace: Vec<T>,
}

/// Evaluates the closed-form log evidence at fixed `(α, β)` with a direct
/// Cholesky solve of `A`.
pub fn log_evidence<T: Scalar>(r: &Matrix<T>, y: &[T], alpha: T, beta: T) -> Result<(T, Vec<T>)> {
    let (n, d) = (r.nrows(), r.ncols());
    if y.len() != n {
        return Err(Error::Shape(format!("{n} feature rows but {} labels", y.len())));
    }
    if !r.is_finite() || !all_finite(y) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Numerical("non-finite evidence input".into()));
    }
    if !(alpha > T::zero() && beta > T::zero()) {
        return Err(Error::Numerical("alpha and beta must be positive".into()));
    }
    let mut a = r.gram();
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] *= beta;
        }
        a[(i, i)] += alpha;
    }
    let chol = Cholesky::new(&a)?;
    let rty = r.tr_mul_vec(y);
    let m: Vec<T> = chol.solve(&rty).into_iter().map(|v| v * beta).collect();
    let fit = r.mul_vec(&m);
    let res: T = y.iter().zip(&fit).map(|(&yi, &fi)| (yi - fi) * (yi - fi)).sum();
    let ev = evidence_terms(n, d, alpha, beta, chol.ln_det(), res, dot(&m, &m));
    Ok((ev, m))
}

fn evidence_terms<T: Scalar>(n: usize, d: usize, alpha: T, beta: T, ln_det: T, res: T, mm: T) -> T {
    let half = T::lit(0.5);
    let nf = T::from_usize_lossy(n);
    let df = T::from_usize_lossy(d);
    half * df * alpha.ln() + half * nf * beta.ln()
        - half * nf * T::lit(std::f64::consts::TAU).ln()
        - half * ln_det
        - half * beta * res
        - half * alpha * mm
}

/// Eigendecomposition of `RᵀR`, shared across label vectors.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    /// Squared singular values of `R` (eigenvalues of `RᵀR`), clamped at 0.
    pub sigma_sq: Vec<T>,
    vectors: Matrix<T>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn of(r: &Matrix<T>) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::Numerical("non-finite feature matrix".into()));
        }
        let (vals, vectors) = symmetric_eigen(&r.gram())?;
        Ok(Self {
            sigma_sq: vals.into_iter().map(|v| v.max(T::zero())).collect(),
            vectors,
        })
    }
}

pub fn maximize_evidence<T: Scalar>(r: &Matrix<T>, y: &[T]) -> Result<EvidenceState<T>> {
    let spectrum = Spectrum::of(r)?;
    maximize_evidence_with(&spectrum, r, y)
}

/// [`maximize_evidence`] reusing a precomputed spectrum of `r`.
pub fn maximize_evidence_with<T: Scalar>(spectrum: &Spectrum<T>, r: &Matrix<T>, y: &[T]) -> Result<EvidenceState<T>> {
    let (n, d) = (r.nrows(), r.ncols());
    if y.len() != n {
        return Err(Error::Shape(format!("{n} feature rows but {} labels", y.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientData("evidence maximization needs n >= 2".into()));
    }
    if !all_finite(y) {
        return Err(Error::Numerical("non-finite labels".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateLabels("labels are constant".into()));
    }

    // Coordinates of Rᵀy in the eigenbasis.
    let rty = r.tr_mul_vec(y);
    let z = spectrum.vectors.tr_mul_vec(&rty);
    let lam = &spectrum.sigma_sq;
    let nf = T::from_usize_lossy(n);

    let mut alpha = T::one();
    let mut beta = T::one();
    let mut trace = Vec::new();
    let mut beta_trace = Vec::new();
    let mut prev: Option<T> = None;
    loop {
        let mut coef = vec![T::zero(); d];
        let mut gamma = T::zero();
        let mut ln_det = T::zero();
        for k in 0..d {
            let denom = alpha + beta * lam[k];
            coef[k] = beta * z[k] / denom;
            gamma += beta * lam[k] / denom;
            ln_det += denom.ln();
        }
        let m = spectrum.vectors.mul_vec(&coef);
        let mm = dot(&coef, &coef);
        let fit = r.mul_vec(&m);
        let res: T = y.iter().zip(&fit).map(|(&yi, &fi)| (yi - fi) * (yi - fi)).sum();
        let ev = evidence_terms(n, d, alpha, beta, ln_det, res, mm);
        if !ev.is_finite() {
            return Err(Error::Numerical(format!(
                "log evidence diverged at alpha={alpha}, beta={beta}"
            )));
        }
        trace.push(ev);
        beta_trace.push(beta);

        let converged = prev.is_some_and(|p| (ev - p).abs() < T::lit(TOLERANCE));
        if converged || trace.len() >= MAX_ITERATIONS {
            return Ok(EvidenceState {
                alpha,
                beta,
                m,
                log_evidence: ev,
                score: ev / nf,
                iterations: trace.len(),
                trace,
                beta_trace,
            });
        }
        prev = Some(ev);

        alpha = if mm > T::zero() {
            gamma / mm
        } else {
            T::lit(ALPHA_ON_ZERO_MEAN)
        };
        let next_beta = (nf - gamma) / res;
        beta = if next_beta.is_finite() && next_beta > T::zero() {
            next_beta.min(T::lit(BETA_MAX))
        } else {
            T::lit(BETA_MAX)
        };
    }
}

/// Mean per-sample maximized evidence over one-vs-rest binarized labels.
pub fn logme<T: Scalar>(r: &Matrix<T>, labels: &[usize], num_classes: usize) -> Result<T> {
    if num_classes < 2 {
        return Err(Error::DegenerateLabels("need at least 2 classes".into()));
    }
    if labels.len() != r.nrows() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            r.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::DegenerateLabels(format!("label {bad} outside 0..{num_classes}")));
    }
    for c in 0..num_classes {
        if !labels.contains(&c) {
            return Err(Error::DegenerateLabels(format!("class {c} has no samples")));
        }
    }
    let spectrum = Spectrum::of(r)?;
    let mut total = T::zero();
    for c in 0..num_classes {
        let y: Vec<T> = labels
            .iter()
            .map(|&l| if l == c { T::one() } else { T::zero() })
            .collect();
        total += maximize_evidence_with(&spectrum, r, &y)?.score;
    }
    Ok(total / T::from_usize_lossy(num_classes))
}

pub fn logme_score(
    model_id: &str,
    dataset_id: &str,
    r: &Matrix<Real>,
    labels: &[usize],
    num_classes: usize,
) -> Result<TransferRecord> {
    Ok(TransferRecord {
        model_id: model_id.to_owned(),
        dataset_id: dataset_id.to_owned(),
        method: TransferMethod::Logme,
        score: logme(r, labels, num_classes)?,
    })
}

/// Labeled features one model extracts on one dataset.
#[derive(Debug, Clone)]
pub struct LogmeJob {
    pub model_id: String,
    pub dataset_id: String,
    pub features: Matrix<Real>,
    pub labels: Vec<usize>,
}

/// Reads `label,f0,..` files laid out as `<dir>/<model_id>/<dataset_id>.csv`.
pub fn discover_jobs(dir: &Path) -> Result<Vec<LogmeJob>> {
    let list = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut jobs = Vec::new();
    for model_dir in list(dir)?.into_iter().filter(|p| p.is_dir()) {
        let model_id = model_dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        for file in list(&model_dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        {
            let dataset_id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let (features, labels) = read_labeled_features(&file)?;
            jobs.push(LogmeJob {
                model_id: model_id.clone(),
                dataset_id,
                features,
                labels,
            });
        }
    }
    Ok(jobs)
}

pub fn read_labeled_features(path: &Path) -> Result<(Matrix<Real>, Vec<usize>)> {
    let t = Table::read(path)?;
    if t.header.first().map(String::as_str) != Some("label") || t.header.len() < 2 {
        return Err(t.parse_error(1, "expected header label,f0,..."));
    }
    let d = t.header.len() - 1;
    let mut labels = Vec::with_capacity(t.rows.len());
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        labels.push(t.parse::<usize>(*line, rec, 0)?);
        let row: Vec<Real> = (1..=d).map(|c| t.parse(*line, rec, c)).collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok((Matrix::from_rows(&rows)?, labels))
}

pub fn write_labeled_features(path: &Path, features: &Matrix<Real>, labels: &[usize]) -> Result<()> {
    let mut header = vec!["label".to_owned()];
    header.extend((0..features.ncols()).map(|j| format!("f{j}")));
    let mut out = crate::io::CsvOut::create(path, &header)?;
    for (i, l) in labels.iter().enumerate() {
        let mut row = vec![l.to_string()];
        row.extend(features.row(i).iter().map(|&v| crate::io::fmt_real(v)));
        out.row(&row)?;
    }
    out.finish()
}

/// Scores independent jobs in parallel. `num_classes` resolves a dataset id
/// to its class count.
pub fn run_jobs<F>(jobs: &[LogmeJob], num_classes: F) -> Vec<Result<TransferRecord>>
where
    F: Fn(&str) -> Option<usize> + Sync,
{
    jobs.par_iter()
        .map(|job| {
            let c = num_classes(&job.dataset_id)
                .ok_or_else(|| Error::Integrity(format!("unknown dataset {}", job.dataset_id)))?;
            logme_score(&job.model_id, &job.dataset_id, &job.features, &job.labels, c)
        })
        .collect()
}

/// Replaces existing records that share `(model, dataset, method)` with the
/// fresh ones; output is sorted by `(model, dataset, method)`.
pub fn merge_scores(existing: &[TransferRecord], fresh: &[TransferRecord]) -> Vec<TransferRecord> {
    let key = |r: &TransferRecord| (r.model_id.clone(), r.dataset_id.clone(), r.method);
    let mut map: std::collections::BTreeMap<_, TransferRecord> =
        existing.iter().map(|r| (key(r), r.clone())).collect();
    for r in fresh {
        map.insert(key(r), r.clone());
    }
    map.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix<f64> {
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::from_row_major(n, d, data).unwrap()
    }

    /// Dense oracle: explicit inverse of A by nalgebra, no shared code path.
    fn oracle_evidence(r: &Matrix<f64>, y: &[f64], alpha: f64, beta: f64) -> f64 {
        let (n, d) = (r.nrows(), r.ncols());
        let rm = nalgebra::DMatrix::from_row_slice(n, d, r.as_slice());
        let yv = nalgebra::DVector::from_column_slice(y);
        let a = nalgebra::DMatrix::<f64>::identity(d, d) * alpha + rm.transpose() * &rm * beta;
        let ainv = a.clone().try_inverse().unwrap();
        let m = ainv * rm.transpose() * &yv * beta;
        let res = (&yv - &rm * &m).norm_squared();
        0.5 * d as f64 * alpha.ln() + 0.5 * n as f64 * beta.ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * a.determinant().ln()
            - 0.5 * beta * res
            - 0.5 * alpha * m.norm_squared()
    }

    #[test]
    fn identity_zero_labels_hand_value() {
        let r = Matrix::identity(2);
        let (ev, m) = log_evidence(&r, &[0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 4f64.ln();
        assert_abs_diff_eq!(ev, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(ev, -2.5310242469692907, epsilon = 1e-12);
        assert_abs_diff_eq!(ev, oracle_evidence(&r, &[0.0, 0.0], 1.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = random_matrix(&mut rng, 10, 3);
        let y: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        for (a, b) in [(1.0, 1.0), (0.3, 4.0), (12.0, 0.05)] {
            let (ev, _) = log_evidence(&r, &y, a, b).unwrap();
            assert_abs_diff_eq!(ev, oracle_evidence(&r, &y, a, b), epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let r = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(matches!(log_evidence(&r, &[1.0], 1.0, 1.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn fixed_point_state_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_matrix(&mut rng, 30, 4);
        let y: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let st = maximize_evidence(&r, &y).unwrap();
        let (ev, m) = log_evidence(&r, &y, st.alpha, st.beta).unwrap();
        assert_abs_diff_eq!(ev, st.log_evidence, epsilon = 1e-9);
        for (a, b) in m.iter().zip(&st.m) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert!(st.alpha > 0.0 && st.beta > 0.0);
        assert_abs_diff_eq!(st.score, st.log_evidence / 30.0, epsilon = 1e-15);
    }

    #[test]
    fn evidence_ascends_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(3..40);
            let d = rng.random_range(1..6);
            let r = random_matrix(&mut rng, n, d);
            let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let st = maximize_evidence(&r, &y).unwrap();
            for w in st.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "evidence decreased: {:?}", st.trace);
            }
        }
    }

    #[test]
    fn small_grid_search_does_not_beat_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let r = random_matrix(&mut rng, 8, 2);
        let y: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let st = maximize_evidence(&r, &y).unwrap();
        let grid: Vec<f64> = (0..60).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 59.0)).collect();
        let best = grid
            .iter()
            .flat_map(|&a| grid.iter().map(move |&b| (a, b)))
            .map(|(a, b)| oracle_evidence(&r, &y, a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(st.log_evidence >= best - 1e-2);
    }

    #[test]
    fn row_permutation_leaves_score_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_matrix(&mut rng, 12, 3);
        let y: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let perm: Vec<usize> = (0..12).rev().collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let a = maximize_evidence(&r, &y).unwrap();
        let b = maximize_evidence(&r.select_rows(&perm), &yp).unwrap();
        assert_abs_diff_eq!(a.score, b.score, epsilon = 1e-10);
    }

    #[test]
    fn exact_fit_drives_beta_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_matrix(&mut rng, 20, 3);
        let y = r.mul_vec(&[1.0, -2.0, 0.5]);
        let st = maximize_evidence(&r, &y).unwrap();
        assert!(st.beta_trace.len() > 2);
        for w in st.beta_trace.windows(2) {
            assert!(w[1] >= w[0], "beta not monotone: {:?}", st.beta_trace);
        }
        assert!(st.beta > 1e3);
    }

    #[test]
    fn constant_labels_are_degenerate() {
        let r = Matrix::<f64>::identity(3);
        assert!(matches!(maximize_evidence(&r, &[1.0, 1.0, 1.0]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn binary_logme_is_mean_of_two_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_matrix(&mut rng, 16, 3);
        let labels: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let y0: Vec<f64> = labels.iter().map(|&l| (l == 0) as u8 as f64).collect();
        let y1: Vec<f64> = y0.iter().map(|v| 1.0 - v).collect();
        let expected = 0.5 * (maximize_evidence(&r, &y0).unwrap().score + maximize_evidence(&r, &y1).unwrap().score);
        assert_abs_diff_eq!(logme(&r, &labels, 2).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn separable_features_beat_shuffled_labels() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c = 3;
        let labels: Vec<usize> = (0..45).map(|i| i % c).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..c).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = Matrix::from_rows(&rows).unwrap();
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        let good = logme(&r, &labels, c).unwrap();
        let bad = logme(&r, &shuffled, c).unwrap();
        assert!(good > bad, "{good} <= {bad}");
    }

    #[test]
    fn column_permutation_and_class_relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_matrix(&mut rng, 24, 4);
        let labels: Vec<usize> = (0..24).map(|i| (i * 7) % 3).collect();
        let base = logme(&r, &labels, 3).unwrap();

        let cols = [2, 0, 3, 1];
        let rows: Vec<Vec<f64>> = (0..24).map(|i| cols.iter().map(|&c| r[(i, c)]).collect()).collect();
        let permuted = logme(&Matrix::from_rows(&rows).unwrap(), &labels, 3).unwrap();
        assert_abs_diff_eq!(base, permuted, epsilon = 1e-9);

        let relabeled: Vec<usize> = labels.iter().map(|&l| (l + 1) % 3).collect();
        assert_abs_diff_eq!(base, logme(&r, &relabeled, 3).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn missing_class_is_named() {
        let r = Matrix::<f64>::identity(3);
        let err = logme(&r, &[0, 0, 2], 3).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn merge_replaces_matching_keys() {
        let rec = |m: &str, s: f64, method| TransferRecord {
            model_id: m.into(),
            dataset_id: "d".into(),
            method,
            score: s,
        };
        let merged = merge_scores(
            &[rec("a", 1.0, TransferMethod::Logme), rec("a", 2.0, TransferMethod::Ingested)],
            &[rec("a", 5.0, TransferMethod::Logme)],
        );
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].score, 5.0);
    }
}
