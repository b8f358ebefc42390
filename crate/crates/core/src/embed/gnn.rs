//! One-layer GraphSAGE and GAT encoders trained full-batch for link
//! prediction with analytic gradients.
//!
//! GraphSAGE: `h_i = ReLU(W x_i + Σ_{n∈N(i)} ReLU(Q x_n))`, with `W` and `Q`
//! both `hidden × in`.
//!
//! GAT: `z_i = W x_i`, `α_ij = softmax_j LeakyReLU(aᵀ[z_i ‖ z_j])`,
//! `h_i = LeakyReLU(Σ_j α_ij z_j)` with `j` ranging over `N(i)` and `i`
//! itself; a node without neighbors keeps `LeakyReLU(z_i)`.
//!
//! Edges are scored by `σ(h_u · h_v + b)` and trained with binary
//! cross-entropy. `N(i)` is the set of positive-edge neighbors.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embed::walk::WalkGraph;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::zoograph::{EdgeLabel, NodeKind, ZooGraph};

pub const LEAKY_SLOPE: f64 = 0.2;
const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    GraphSage,
    Gat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub hidden_dim: usize,
    /// Input width when no node carries features.
    pub input_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            input_dim: 32,
            epochs: 200,
            learning_rate: 0.01,
            seed: 42,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.input_dim == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("hidden_dim, input_dim, epochs and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Node inputs and neighborhoods for one forward pass.
#[derive(Debug, Clone)]
pub struct GnnInput {
    pub kinds: Vec<NodeKind>,
    /// Fixed input features; `None` uses the learned default of the kind.
    pub features: Vec<Option<Vec<f64>>>,
    pub neighbors: Vec<Vec<usize>>,
    pub in_dim: usize,
}

impl GnnInput {
    pub fn new(kinds: Vec<NodeKind>, features: Vec<Option<Vec<f64>>>, neighbors: Vec<Vec<usize>>, in_dim: usize) -> Result<Self> {
        let n = kinds.len();
        if features.len() != n || neighbors.len() != n {
            return Err(Error::Shape("kinds, features and neighbors must cover the same nodes".into()));
        }
        if let Some(f) = features.iter().flatten().find(|f| f.len() != in_dim) {
            return Err(Error::Shape(format!("node feature of width {}, expected {in_dim}", f.len())));
        }
        if neighbors.iter().flatten().any(|&j| j >= n) {
            return Err(Error::Shape("neighbor index out of range".into()));
        }
        Ok(Self {
            kinds,
            features,
            neighbors,
            in_dim,
        })
    }

    /// Builds inputs from a graph: dataset features are projected to a common
    /// width when needed and scaled to unit norm.
    pub fn from_graph(graph: &ZooGraph, config: &GnnConfig) -> Result<Self> {
        let in_dim = graph
            .node_features()
            .values()
            .next()
            .map_or(config.input_dim, Vec::len)
            .max(1);
        let walk = WalkGraph::from_graph(graph);
        let mut projections: std::collections::BTreeMap<usize, Matrix<f64>> = Default::default();
        let mut features = Vec::with_capacity(graph.nodes().len());
        for node in graph.nodes() {
            let f = match graph.node_features().get(node) {
                None => None,
                Some(v) if v.len() == in_dim => Some(v.clone()),
                Some(v) => {
                    let proj = projections
                        .entry(v.len())
                        .or_insert_with(|| random_projection(in_dim, v.len(), config.seed));
                    Some(proj.mul_vec(v))
                }
            };
            features.push(f.map(unit_norm));
        }
        let neighbors = (0..graph.nodes().len())
            .map(|i| walk.neighbors(i).iter().map(|&(j, _)| j).collect())
            .collect();
        Self::new(graph.nodes().iter().map(|n| n.kind).collect(), features, neighbors, in_dim)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

fn unit_norm(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Gaussian projection `out × in`, fixed by `seed` and the two widths.
pub fn random_projection(out: usize, input: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((input as u64) << 32));
    let scale = 1.0 / (out as f64).sqrt();
    let data = (0..out * input).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
    Matrix::from_row_major(out, input, data).expect("sized")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub kind: GnnKind,
    /// Self transform (GraphSAGE) or shared transform (GAT).
    pub w: Matrix<f64>,
    /// Neighbor transform; `0×0` for GAT.
    pub q: Matrix<f64>,
    /// Attention vector `[a_self ‖ a_neighbor]`; empty for GraphSAGE.
    pub a: Vec<f64>,
    pub model_default: Vec<f64>,
    pub dataset_default: Vec<f64>,
    /// Decoder bias.
    pub bias: f64,
    pub seed: u64,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let lim = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-lim..lim)).collect();
    Matrix::from_row_major(rows, cols, data).expect("sized")
}

impl GnnParams {
    pub fn init(kind: GnnKind, in_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let default_scale = 1.0 / (in_dim as f64).sqrt();
        let default = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..in_dim).map(|_| rng.random_range(-default_scale..default_scale)).collect()
        };
        match kind {
            GnnKind::GraphSage => {
                let w = xavier(&mut rng, hidden_dim, in_dim);
                let q = xavier(&mut rng, hidden_dim, in_dim);
                Self {
                    kind,
                    w,
                    q,
                    a: Vec::new(),
                    model_default: default(&mut rng),
                    dataset_default: default(&mut rng),
                    bias: 0.0,
                    seed,
                }
            }
            GnnKind::Gat => {
                let w = xavier(&mut rng, hidden_dim, in_dim);
                let lim = (6.0 / (2 * hidden_dim + 1) as f64).sqrt();
                let a = (0..2 * hidden_dim).map(|_| rng.random_range(-lim..lim)).collect();
                Self {
                    kind,
                    w,
                    q: Matrix::zeros(0, 0),
                    a,
                    model_default: default(&mut rng),
                    dataset_default: default(&mut rng),
                    bias: 0.0,
                    seed,
                }
            }
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            w: Matrix::zeros(self.w.nrows(), self.w.ncols()),
            q: Matrix::zeros(self.q.nrows(), self.q.ncols()),
            a: vec![0.0; self.a.len()],
            model_default: vec![0.0; self.model_default.len()],
            dataset_default: vec![0.0; self.dataset_default.len()],
            bias: 0.0,
            seed: self.seed,
        }
    }

    /// All trainable values in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w.as_slice());
        v.extend_from_slice(self.q.as_slice());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.model_default);
        v.extend_from_slice(&self.dataset_default);
        v.push(self.bias);
        v
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for slot in self
            .w
            .as_mut_slice()
            .iter_mut()
            .chain(self.q.as_mut_slice())
            .chain(&mut self.a)
            .chain(&mut self.model_default)
            .chain(&mut self.dataset_default)
        {
            *slot = it.next().expect("flat length");
        }
        self.bias = it.next().expect("flat length");
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, input: &GnnInput) -> Result<()> {
        if input.in_dim != self.in_dim() {
            return Err(Error::Shape(format!(
                "input width {} but parameters expect {}",
                input.in_dim,
                self.in_dim()
            )));
        }
        Ok(())
    }

    fn node_input<'a>(&'a self, input: &'a GnnInput, i: usize) -> &'a [f64] {
        match (&input.features[i], input.kinds[i]) {
            (Some(f), _) => f,
            (None, NodeKind::Model) => &self.model_default,
            (None, NodeKind::Dataset) => &self.dataset_default,
        }
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Cache {
    Sage {
        /// `Q x_i`.
        p: Vec<Vec<f64>>,
        /// `W x_i + Σ ReLU(Q x_n)`.
        pre: Vec<Vec<f64>>,
    },
    Gat {
        z: Vec<Vec<f64>>,
        /// Per node: (pre-activation t_ij, α_ij) for each neighbor, in order.
        att: Vec<Vec<(f64, f64)>>,
        o: Vec<Vec<f64>>,
    },
}

struct Forward {
    h: Vec<Vec<f64>>,
    cache: Cache,
}

fn forward(params: &GnnParams, input: &GnnInput) -> Forward {
    let n = input.len();
    let xs: Vec<&[f64]> = (0..n).map(|i| params.node_input(input, i)).collect();
    match params.kind {
        GnnKind::GraphSage => {
            let p: Vec<Vec<f64>> = xs.iter().map(|x| params.q.mul_vec(x)).collect();
            let pre: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut acc = params.w.mul_vec(xs[i]);
                    for &j in &input.neighbors[i] {
                        for (a, &v) in acc.iter_mut().zip(&p[j]) {
                            *a += relu(v);
                        }
                    }
                    acc
                })
                .collect();
            let h = pre.iter().map(|v| v.iter().map(|&x| relu(x)).collect()).collect();
            Forward {
                h,
                cache: Cache::Sage { p, pre },
            }
        }
        GnnKind::Gat => {
            let z: Vec<Vec<f64>> = xs.iter().map(|x| params.w.mul_vec(x)).collect();
            let dim = params.w.nrows();
            let (a_self, a_nb) = params.a.split_at(dim);
            let mut att = Vec::with_capacity(n);
            let mut o = Vec::with_capacity(n);
            for i in 0..n {
                let nb = &with_self(&input.neighbors[i], i);
                let (ts, alphas) = attention(&z, a_self, a_nb, i, nb);
                let mut oi = vec![0.0; dim];
                for (&j, &al) in nb.iter().zip(&alphas) {
                    for (acc, &v) in oi.iter_mut().zip(&z[j]) {
                        *acc += al * v;
                    }
                }
                att.push(ts.into_iter().zip(alphas).collect());
                o.push(oi);
            }
            let h = o.iter().map(|oi| oi.iter().map(|&v| leaky(v)).collect()).collect();
            Forward {
                h,
                cache: Cache::Gat { z, att, o },
            }
        }
    }
}

/// `i` followed by its neighbors.
fn with_self(nb: &[usize], i: usize) -> Vec<usize> {
    std::iter::once(i).chain(nb.iter().copied()).collect()
}

/// Pre-activations and softmax weights of node `i` over `nb`.
fn attention(z: &[Vec<f64>], a_self: &[f64], a_nb: &[f64], i: usize, nb: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let self_term = dotv(a_self, &z[i]);
    let ts: Vec<f64> = nb.iter().map(|&j| self_term + dotv(a_nb, &z[j])).collect();
    let es: Vec<f64> = ts.iter().map(|&t| leaky(t)).collect();
    let mx = es.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = es.iter().map(|&e| (e - mx).exp()).collect();
    let total: f64 = ex.iter().sum();
    (ts, ex.into_iter().map(|e| e / total).collect())
}

/// GraphSAGE node states.
pub fn sage_forward(params: &GnnParams, input: &GnnInput) -> Result<Vec<Vec<f64>>> {
    if params.kind != GnnKind::GraphSage {
        return Err(Error::InvalidConfig("sage_forward needs GraphSAGE parameters".into()));
    }
    params.check_input(input)?;
    Ok(forward(params, input).h)
}

/// GAT node states.
pub fn gat_forward(params: &GnnParams, input: &GnnInput) -> Result<Vec<Vec<f64>>> {
    if params.kind != GnnKind::Gat {
        return Err(Error::InvalidConfig("gat_forward needs GAT parameters".into()));
    }
    params.check_input(input)?;
    Ok(forward(params, input).h)
}

/// Attention coefficients of node `i` over its neighbors, given node states
/// `h` (inputs to the layer). Returned in neighbor order.
pub fn gat_attention(params: &GnnParams, neighbors: &[usize], h: &[Vec<f64>], i: usize) -> Result<Vec<(usize, f64)>> {
    if params.kind != GnnKind::Gat || params.a.len() != 2 * params.w.nrows() {
        return Err(Error::InvalidConfig("gat_attention needs GAT parameters".into()));
    }
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborhood(format!("node {i}")));
    }
    if let Some(bad) = h.iter().find(|v| v.len() != params.in_dim()) {
        return Err(Error::Shape(format!("state of width {}, expected {}", bad.len(), params.in_dim())));
    }
    let z: Vec<Vec<f64>> = h.iter().map(|x| params.w.mul_vec(x)).collect();
    let (a_self, a_nb) = params.a.split_at(params.w.nrows());
    let (_, alphas) = attention(&z, a_self, a_nb, i, neighbors);
    Ok(neighbors.iter().copied().zip(alphas).collect())
}

/// A labeled node pair for link prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkExample {
    pub u: usize,
    pub v: usize,
    pub label: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bce_from_states(h: &[Vec<f64>], bias: f64, examples: &[LinkExample]) -> f64 {
    examples
        .iter()
        .map(|e| {
            let s = dotv(&h[e.u], &h[e.v]) + bias;
            softplus(s) - e.label * s
        })
        .sum::<f64>()
        / examples.len() as f64
}

/// Mean binary cross-entropy of the decoder over `examples`.
pub fn bce_loss(params: &GnnParams, input: &GnnInput, examples: &[LinkExample]) -> Result<f64> {
    params.check_input(input)?;
    Ok(bce_from_states(&forward(params, input).h, params.bias, examples))
}

/// Loss and analytic gradient (same layout as the parameters).
pub fn bce_loss_and_grad(params: &GnnParams, input: &GnnInput, examples: &[LinkExample]) -> Result<(f64, GnnParams)> {
    params.check_input(input)?;
    if examples.is_empty() {
        return Err(Error::DegenerateTraining("no training examples".into()));
    }
    let n = input.len();
    let fwd = forward(params, input);
    let h = &fwd.h;
    let inv = 1.0 / examples.len() as f64;
    let mut grad = params.zeros_like();
    let out_dim = params.out_dim();
    let mut dh = vec![vec![0.0; out_dim]; n];
    let mut loss = 0.0;
    for e in examples {
        let s = dotv(&h[e.u], &h[e.v]) + params.bias;
        loss += softplus(s) - e.label * s;
        let g = (sigmoid(s) - e.label) * inv;
        grad.bias += g;
        for k in 0..out_dim {
            dh[e.u][k] += g * h[e.v][k];
            dh[e.v][k] += g * h[e.u][k];
        }
    }
    loss *= inv;

    let xs: Vec<&[f64]> = (0..n).map(|i| params.node_input(input, i)).collect();
    let mut dx = vec![vec![0.0; params.in_dim()]; n];
    let add_outer = |m: &mut Matrix<f64>, dv: &[f64], x: &[f64]| {
        for (r, &d) in dv.iter().enumerate() {
            if d != 0.0 {
                for (slot, &xv) in m.row_mut(r).iter_mut().zip(x) {
                    *slot += d * xv;
                }
            }
        }
    };

    match &fwd.cache {
        Cache::Sage { p, pre } => {
            let dim = params.w.nrows();
            let dpre: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..dim).map(|k| if pre[i][k] > 0.0 { dh[i][k] } else { 0.0 }).collect())
                .collect();
            let mut dr = vec![vec![0.0; dim]; n];
            for i in 0..n {
                for &j in &input.neighbors[i] {
                    for k in 0..dim {
                        dr[j][k] += dpre[i][k];
                    }
                }
            }
            for i in 0..n {
                let dp: Vec<f64> = (0..dim).map(|k| if p[i][k] > 0.0 { dr[i][k] } else { 0.0 }).collect();
                add_outer(&mut grad.w, &dpre[i], xs[i]);
                add_outer(&mut grad.q, &dp, xs[i]);
                let a = params.w.tr_mul_vec(&dpre[i]);
                let b = params.q.tr_mul_vec(&dp);
                for (d, (x, y)) in dx[i].iter_mut().zip(a.iter().zip(&b)) {
                    *d = x + y;
                }
            }
        }
        Cache::Gat { z, att, o } => {
            let dim = params.w.nrows();
            let (a_self, a_nb) = params.a.split_at(dim);
            let mut dz = vec![vec![0.0; dim]; n];
            let mut da = vec![0.0; 2 * dim];
            for i in 0..n {
                let doi: Vec<f64> = (0..dim).map(|k| dh[i][k] * leaky_grad(o[i][k])).collect();
                let nb = &with_self(&input.neighbors[i], i);
                let dalpha: Vec<f64> = nb.iter().map(|&j| dotv(&doi, &z[j])).collect();
                let mean: f64 = att[i].iter().zip(&dalpha).map(|(&(_, al), &d)| al * d).sum();
                for (idx, &j) in nb.iter().enumerate() {
                    let (t, al) = att[i][idx];
                    for k in 0..dim {
                        dz[j][k] += al * doi[k];
                    }
                    let dt = al * (dalpha[idx] - mean) * leaky_grad(t);
                    for k in 0..dim {
                        da[k] += dt * z[i][k];
                        da[dim + k] += dt * z[j][k];
                        dz[i][k] += dt * a_self[k];
                        dz[j][k] += dt * a_nb[k];
                    }
                }
            }
            grad.a = da;
            for i in 0..n {
                add_outer(&mut grad.w, &dz[i], xs[i]);
                dx[i] = params.w.tr_mul_vec(&dz[i]);
            }
        }
    }

    for i in 0..n {
        if input.features[i].is_none() {
            let target = match input.kinds[i] {
                NodeKind::Model => &mut grad.model_default,
                NodeKind::Dataset => &mut grad.dataset_default,
            };
            for (t, d) in target.iter_mut().zip(&dx[i]) {
                *t += d;
            }
        }
    }
    Ok((loss, grad))
}

/// Link-prediction examples from a graph: every positive model-dataset edge
/// is a positive; negatives are the labeled-negative edges, topped up with
/// uniformly sampled model-dataset non-edges until they match the positives.
/// Non-edges are drawn only among datasets that keep at least one
/// model-dataset edge.
pub fn link_examples(graph: &ZooGraph, seed: u64) -> Result<Vec<LinkExample>> {
    let idx = |n| graph.node_index(n).expect("endpoint indexed");
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut linked: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut active_datasets = BTreeSet::new();
    for e in graph.edges().iter().filter(|e| e.kind.is_model_dataset()) {
        let (a, b) = (idx(&e.a), idx(&e.b));
        linked.insert((a.min(b), a.max(b)));
        active_datasets.insert(a);
        match e.label {
            EdgeLabel::Positive => pos.push(LinkExample { u: a, v: b, label: 1.0 }),
            EdgeLabel::Negative => neg.push(LinkExample { u: a, v: b, label: 0.0 }),
            EdgeLabel::Unlabeled => {}
        }
    }
    // A pair carrying both a performance and a transfer edge counts once.
    let mut seen = BTreeSet::new();
    pos.retain(|e| seen.insert((e.u, e.v)));

    if neg.len() < pos.len() {
        let models: Vec<usize> = graph
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Model)
            .map(|(i, _)| i)
            .collect();
        let candidates: Vec<(usize, usize)> = active_datasets
            .iter()
            .flat_map(|&d| models.iter().map(move |&m| (d, m)))
            .filter(|&(d, m)| !linked.contains(&(d.min(m), d.max(m))))
            .collect();
        let want = (pos.len() - neg.len()).min(candidates.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), want).into_vec();
        picked.sort_unstable();
        neg.extend(picked.into_iter().map(|k| LinkExample {
            u: candidates[k].0,
            v: candidates[k].1,
            label: 0.0,
        }));
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateTraining(format!(
            "{} positive and {} negative examples",
            pos.len(),
            neg.len()
        )));
    }
    pos.extend(neg);
    Ok(pos)
}

#[derive(Debug, Clone)]
pub struct LinkPredOutput {
    pub params: GnnParams,
    pub states: Vec<Vec<f64>>,
    /// BCE before training and after every epoch.
    pub losses: Vec<f64>,
}

/// Full-batch Adam on the link-prediction BCE.
pub fn fit_link_prediction(
    kind: GnnKind,
    input: &GnnInput,
    examples: &[LinkExample],
    config: &GnnConfig,
) -> Result<LinkPredOutput> {
    config.validate()?;
    if !examples.iter().any(|e| e.label > 0.5) || !examples.iter().any(|e| e.label < 0.5) {
        return Err(Error::DegenerateTraining("need both positive and negative examples".into()));
    }
    let mut params = GnnParams::init(kind, input.in_dim, config.hidden_dim, config.seed);
    let mut theta = params.flatten();
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 1..=config.epochs {
        let (loss, grad) = bce_loss_and_grad(&params, input, examples)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("link-prediction loss diverged at epoch {epoch}")));
        }
        losses.push(loss);
        let g = grad.flatten();
        let c1 = 1.0 - ADAM_B1.powi(epoch as i32);
        let c2 = 1.0 - ADAM_B2.powi(epoch as i32);
        for k in 0..theta.len() {
            m1[k] = ADAM_B1 * m1[k] + (1.0 - ADAM_B1) * g[k];
            m2[k] = ADAM_B2 * m2[k] + (1.0 - ADAM_B2) * g[k] * g[k];
            theta[k] -= config.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + ADAM_EPS);
        }
        params.assign(&theta);
    }
    let states = forward(&params, input).h;
    losses.push(bce_from_states(&states, params.bias, examples));
    Ok(LinkPredOutput { params, states, losses })
}

/// Trains a one-layer encoder on `graph` and returns its node states.
pub fn train_linkpred(graph: &ZooGraph, kind: GnnKind, config: &GnnConfig) -> Result<(EmbeddingTable, LinkPredOutput)> {
    let input = GnnInput::from_graph(graph, config)?;
    let examples = link_examples(graph, config.seed)?;
    let out = fit_link_prediction(kind, &input, &examples, config)?;
    let table = EmbeddingTable::from_rows(graph.nodes(), &out.states)?;
    Ok((table, out))
}

/// Fraction of examples classified correctly at threshold 0.5.
pub fn link_accuracy(out: &LinkPredOutput, examples: &[LinkExample]) -> f64 {
    let correct = examples
        .iter()
        .filter(|e| {
            let s = dotv(&out.states[e.u], &out.states[e.v]) + out.params.bias;
            (sigmoid(s) > 0.5) == (e.label > 0.5)
        })
        .count();
    correct as f64 / examples.len() as f64
}
