//! Skip-gram with negative sampling over node walks.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::walk::Walk;
use crate::embed::WalkConfig;
use crate::error::{Error, Result};

const NOISE_POWER: f64 = 0.75;
const MIN_LR_FRACTION: f64 = 1e-4;
/// Stream id separating skip-gram randomness from the walk streams.
const SKIPGRAM_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct SkipgramOutput {
    /// Center ("input") vectors, one per node index.
    pub vectors: Vec<Vec<f64>>,
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Trains center/context vectors for `n_nodes` nodes on `walks`.
///
/// Negatives are drawn from walk-occurrence counts raised to 0.75. The
/// learning rate decays linearly over all epochs. Nodes that never occur in
/// a walk keep their random initialization.
pub fn train_skipgram(walks: &[Walk], n_nodes: usize, config: &WalkConfig) -> Result<SkipgramOutput> {
    config.validate()?;
    if walks.iter().all(|w| w.len() < 2) {
        return Err(Error::EmptyInput("no walk has a (center, context) pair".into()));
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SKIPGRAM_STREAM);

    let mut counts = vec![0usize; n_nodes];
    for &v in walks.iter().flatten() {
        counts[v] += 1;
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(NOISE_POWER)))
        .map_err(|e| Error::Numerical(format!("noise distribution: {e}")))?;

    let scale = 0.5 / dim as f64;
    let mut center: Vec<Vec<f64>> = (0..n_nodes)
        .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    let mut context = vec![vec![0.0; dim]; n_nodes];

    let tokens: usize = walks.iter().map(Vec::len).sum();
    let total = (tokens * config.epochs) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for walk in walks {
            for (i, &c) in walk.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - processed as f64 / total).max(MIN_LR_FRACTION);
                processed += 1;
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(walk.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let o = walk[j];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    pairs += 1;
                    for k in 0..=config.negatives_per_positive {
                        let (target, label) = if k == 0 {
                            (o, 1.0)
                        } else {
                            let neg = noise.sample(&mut rng);
                            if neg == o {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let out = &mut context[target];
                        let score: f64 = center[c].iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        loss -= if label > 0.0 { log_sigmoid(score) } else { log_sigmoid(-score) };
                        let g = lr * (label - sigmoid(score));
                        for ((gd, ov), cv) in grad.iter_mut().zip(out.iter_mut()).zip(&center[c]) {
                            *gd += g * *ov;
                            *ov += g * cv;
                        }
                    }
                    for (cv, gd) in center[c].iter_mut().zip(&grad) {
                        *cv += gd;
                    }
                }
            }
        }
        epoch_losses.push(loss / pairs.max(1) as f64);
    }
    Ok(SkipgramOutput {
        vectors: center,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::walk::{sample_walks, WalkGraph, WalkVariant};

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    fn two_cliques() -> WalkGraph {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        edges.push((4, 5, 1.0));
        WalkGraph::from_undirected(10, &edges)
    }

    fn config() -> WalkConfig {
        WalkConfig {
            dim: 16,
            walk_length: 20,
            walks_per_node: 20,
            epochs: 5,
            ..WalkConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_cliques_separate() {
        let g = two_cliques();
        let cfg = config();
        let walks = sample_walks(&g, &cfg, WalkVariant::Node2vec).unwrap();
        let out = train_skipgram(&walks, 10, &cfg).unwrap();
        let first = out.epoch_losses[0];
        let last = *out.epoch_losses.last().unwrap();
        assert!(last <= first * 1.05, "{:?}", out.epoch_losses);

        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in 0..10 {
            for b in a + 1..10 {
                let c = cosine(&out.vectors[a], &out.vectors[b]);
                if (a < 5) == (b < 5) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        assert!(intra / ni as f64 > inter / nx as f64);
    }

    #[test]
    fn deterministic_given_seed() {
        let g = two_cliques();
        let cfg = config();
        let walks = sample_walks(&g, &cfg, WalkVariant::Node2vec).unwrap();
        let a = train_skipgram(&walks, 10, &cfg).unwrap();
        let b = train_skipgram(&walks, 10, &cfg).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn output_dimension_follows_config() {
        let g = two_cliques();
        let cfg = WalkConfig {
            epochs: 1,
            walks_per_node: 1,
            ..WalkConfig::default()
        };
        let walks = sample_walks(&g, &cfg, WalkVariant::Node2vec).unwrap();
        let out = train_skipgram(&walks, 10, &cfg).unwrap();
        assert!(out.vectors.iter().all(|v| v.len() == 128));
    }
}
