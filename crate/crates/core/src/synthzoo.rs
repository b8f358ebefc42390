//! Synthetic model zoos with planted latent structure.
//!
//! Dataset latents `v_j ~ N(0, I)`. Each model is pre-trained on a zoo
//! dataset `src(i)` and its latent `u_i = (v_src(i) + z_i)/√2`, `z_i ~ N(0, I)`,
//! so `u_i` is still standard normal. Fine-tune accuracy is
//! `logistic(u_i·v_j + b_i + c_j + ε)`.
//!
//! Probe features of dataset `j` are `v_j` padded and rotated into
//! `feature_dim`, split across samples with small noise. Transferability
//! scores are LogME on per-pair probe features whose class separation grows
//! with the true accuracy.

use std::path::Path;

use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_real, CsvOut};
use crate::linalg::Matrix;
use crate::registry::{save_zoo, DatasetCard, Modality, ModelCard, RecordKind, SampleFeatureMatrix, TrainingRecord, Zoo};
use crate::transferability::{logme, TransferMethod, TransferRecord};
use crate::Real;

pub const TRUTH_FILE: &str = "truth.csv";
/// Accuracy spread every generated dataset is expected to exceed.
pub const MIN_DATASET_STD: Real = 0.01;

const ARCHITECTURES: [&str; 5] = ["convnext", "efficientnet", "resnet", "swin", "vit"];
const INPUT_SHAPES: [u32; 3] = [224, 256, 384];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_models: usize,
    pub n_datasets: usize,
    pub latent_dim: usize,
    pub noise_std: Real,
    /// Width of dataset probe features.
    pub feature_dim: usize,
    /// Fraction of (model, dataset) pairs with a fine-tune record.
    pub observed_fraction: Real,
    pub samples_per_dataset: usize,
    /// Std of the per-model bias `b_i`.
    pub model_bias_std: Real,
    /// Std of the per-dataset bias `c_j`.
    pub dataset_bias_std: Real,
    /// Samples per (model, dataset) probe used for LogME.
    pub probe_samples: usize,
    pub probe_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_models: 40,
            n_datasets: 12,
            latent_dim: 4,
            noise_std: 0.05,
            feature_dim: 16,
            observed_fraction: 0.7,
            samples_per_dataset: 8,
            model_bias_std: 1.0,
            dataset_bias_std: 0.5,
            probe_samples: 48,
            probe_dim: 6,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_datasets < 3 {
            return Err(Error::InvalidConfig(format!("n_datasets = {} but at least 3 are needed", self.n_datasets)));
        }
        if self.n_models < 2 {
            return Err(Error::InvalidConfig("n_models must be at least 2".into()));
        }
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("feature_dim", self.feature_dim),
            ("samples_per_dataset", self.samples_per_dataset),
            ("probe_samples", self.probe_samples),
            ("probe_dim", self.probe_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.feature_dim < self.latent_dim {
            return Err(Error::InvalidConfig("feature_dim must be at least latent_dim".into()));
        }
        if !(self.noise_std >= 0.0 && self.model_bias_std >= 0.0 && self.dataset_bias_std >= 0.0) {
            return Err(Error::InvalidConfig("standard deviations must be non-negative".into()));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return Err(Error::InvalidConfig("observed_fraction must lie in (0,1]".into()));
        }
        Ok(())
    }
}

/// Planted quantities behind a generated zoo.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub model_ids: Vec<String>,
    pub dataset_ids: Vec<String>,
    pub model_latents: Vec<Vec<Real>>,
    pub dataset_latents: Vec<Vec<Real>>,
    pub model_bias: Vec<Real>,
    pub dataset_bias: Vec<Real>,
    /// `logit[i][j]`, noise included.
    pub logit: Vec<Vec<Real>>,
    /// Accuracy std over the observed records of each dataset.
    pub observed_std: Vec<Real>,
}

impl SynthTruth {
    pub fn accuracy(&self, i: usize, j: usize) -> Real {
        logistic(self.logit[i][j])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["model_id", "dataset_id", "true_logit"])?;
        for (i, m) in self.model_ids.iter().enumerate() {
            for (j, d) in self.dataset_ids.iter().enumerate() {
                out.row(&[m.clone(), d.clone(), fmt_real(self.logit[i][j])])?;
            }
        }
        out.finish()
    }
}

pub fn logistic(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Real> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
fn rotation(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<Real>> {
    let mut q: Vec<Vec<Real>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v = normal_vec(rng, n);
        for b in &q {
            let d: Real = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<Real>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
    }
    q
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    let w = n.to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0w$}")).collect()
}

/// Generates a zoo and its ground truth; deterministic given the seed.
pub fn generate(config: &SynthConfig) -> Result<(Zoo, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (nm, nd, l) = (config.n_models, config.n_datasets, config.latent_dim);
    let model_ids = ids("m", nm);
    let dataset_ids = ids("d", nd);

    let v: Vec<Vec<Real>> = (0..nd).map(|_| normal_vec(&mut rng, l)).collect();
    let c: Vec<Real> = (0..nd).map(|_| config.dataset_bias_std * rng.sample::<Real, _>(StandardNormal)).collect();
    let src: Vec<usize> = (0..nm).map(|_| rng.random_range(0..nd)).collect();
    let u: Vec<Vec<Real>> = src
        .iter()
        .map(|&s| {
            let z = normal_vec(&mut rng, l);
            v[s].iter().zip(&z).map(|(a, b)| (a + b) / 2f64.sqrt()).collect()
        })
        .collect();
    let b: Vec<Real> = (0..nm).map(|_| config.model_bias_std * rng.sample::<Real, _>(StandardNormal)).collect();
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let logit: Vec<Vec<Real>> = (0..nm)
        .map(|i| {
            (0..nd)
                .map(|j| {
                    let dot: Real = u[i].iter().zip(&v[j]).map(|(x, y)| x * y).sum();
                    dot + b[i] + c[j] + noise.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    let datasets: Vec<DatasetCard> = (0..nd)
        .map(|j| {
            let classes = (6.0 - 4.0 * c[j] + rng.sample::<Real, _>(StandardNormal)).round().clamp(2.0, 20.0);
            DatasetCard {
                dataset_id: dataset_ids[j].clone(),
                num_samples: 10f64.powf(rng.random_range(3.0..5.0)).round() as u64,
                num_classes: classes as u32,
                modality: Modality::Image,
            }
        })
        .collect();

    let models: Vec<ModelCard> = (0..nm)
        .map(|i| {
            let params = 10f64.powf(rng.random_range(6.7..8.5)).round();
            let weak_quality = 1.0 + 0.25 * b[i] + 0.5 * rng.sample::<Real, _>(StandardNormal);
            ModelCard {
                model_id: model_ids[i].clone(),
                architecture: ARCHITECTURES.choose(&mut rng).expect("non-empty").to_string(),
                pretrained_dataset_id: Some(dataset_ids[src[i]].clone()),
                input_shape: *INPUT_SHAPES.choose(&mut rng).expect("non-empty"),
                num_params: params as u64,
                memory_mb: params * 4.0 / 1e6 * rng.random_range(0.9..1.1),
                pretrained_accuracy: Some(logistic(weak_quality)),
            }
        })
        .collect();

    let observe = Bernoulli::new(config.observed_fraction).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut history = Vec::new();
    for j in 0..nd {
        for i in 0..nm {
            if observe.sample(&mut rng) {
                history.push(TrainingRecord {
                    model_id: model_ids[i].clone(),
                    dataset_id: dataset_ids[j].clone(),
                    accuracy: logistic(logit[i][j]),
                    kind: RecordKind::Finetune,
                });
            }
        }
    }

    let rot = rotation(&mut rng, config.feature_dim);
    let per_sample = 1.0 / config.samples_per_dataset as Real;
    let features: Vec<SampleFeatureMatrix> = (0..nd)
        .map(|j| {
            let padded: Vec<Real> = (0..config.feature_dim).map(|k| v[j].get(k).copied().unwrap_or(0.0)).collect();
            let emb: Vec<Real> = rot.iter().map(|r| r.iter().zip(&padded).map(|(a, b)| a * b).sum()).collect();
            let data = (0..config.samples_per_dataset)
                .flat_map(|_| emb.iter().map(|&e| e * per_sample).collect::<Vec<_>>())
                .map(|x| x + 0.02 * per_sample * rng.sample::<Real, _>(StandardNormal))
                .collect();
            SampleFeatureMatrix::new(
                &dataset_ids[j],
                Matrix::from_row_major(config.samples_per_dataset, config.feature_dim, data).expect("sized"),
            )
        })
        .collect();

    let mut transfer = Vec::with_capacity(nm * nd);
    for i in 0..nm {
        for j in 0..nd {
            let (r, labels) = probe_features(config, i * nd + j, logistic(logit[i][j]), datasets[j].num_classes as usize);
            transfer.push(TransferRecord {
                model_id: model_ids[i].clone(),
                dataset_id: dataset_ids[j].clone(),
                method: TransferMethod::Logme,
                score: logme(&r, &labels, datasets[j].num_classes as usize)?,
            });
        }
    }

    let observed_std: Vec<Real> = dataset_ids
        .iter()
        .map(|d| {
            let acc: Vec<Real> = history.iter().filter(|r| &r.dataset_id == d).map(|r| r.accuracy).collect();
            if acc.is_empty() {
                return 0.0;
            }
            let m = acc.iter().sum::<Real>() / acc.len() as Real;
            (acc.iter().map(|a| (a - m).powi(2)).sum::<Real>() / acc.len() as Real).sqrt()
        })
        .collect();
    for (d, s) in dataset_ids.iter().zip(&observed_std) {
        if *s <= MIN_DATASET_STD {
            warn!("synthetic dataset {d} has accuracy std {s:.4}");
        }
    }

    let zoo = Zoo::new(models, datasets, history, features, transfer)?;
    Ok((
        zoo,
        SynthTruth {
            model_ids,
            dataset_ids,
            model_latents: u,
            dataset_latents: v,
            model_bias: b,
            dataset_bias: c,
            logit,
            observed_std,
        },
    ))
}

/// Labeled probe features for one pair: class prototypes scaled by a
/// separation that grows with `accuracy`, plus unit noise.
pub fn probe_features(config: &SynthConfig, stream: usize, accuracy: Real, num_classes: usize) -> (Matrix<Real>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream as u64 + 1);
    let d = config.probe_dim;
    let protos: Vec<Vec<Real>> = (0..num_classes).map(|_| normal_vec(&mut rng, d)).collect();
    let sep = 2.0 * accuracy;
    let labels: Vec<usize> = (0..config.probe_samples).map(|k| k % num_classes).collect();
    let data = labels
        .iter()
        .flat_map(|&y| protos[y].iter().map(|&p| sep * p).collect::<Vec<_>>())
        .map(|x| x + rng.sample::<Real, _>(StandardNormal))
        .collect();
    (Matrix::from_row_major(config.probe_samples, d, data).expect("sized"), labels)
}

/// Writes the registry directory plus `truth.csv`.
pub fn write_synth(dir: &Path, zoo: &Zoo, truth: &SynthTruth) -> Result<()> {
    save_zoo(zoo, dir)?;
    truth.write_csv(&dir.join(TRUTH_FILE))
}
