//! CART regression trees with variance-reduction splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    Leaf {
        value: T,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Presorted view of a row sample, reusable across fits on the same rows.
#[derive(Debug, Clone)]
pub struct TreeBuilder<T> {
    /// Column-major values: `cols[f][pos]`.
    cols: Vec<Vec<T>>,
    /// Sample row of each position.
    rows: Vec<usize>,
    /// Positions sorted by each feature.
    order: Vec<Vec<usize>>,
}

impl<T: Scalar> TreeBuilder<T> {
    /// `sample` lists training rows of `x`; repeats are allowed.
    pub fn new(x: &Matrix<T>, sample: &[usize]) -> Self {
        let d = x.ncols();
        let cols: Vec<Vec<T>> = (0..d).map(|f| sample.iter().map(|&r| x[(r, f)]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<usize> = (0..sample.len()).collect();
                o.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).expect("finite features").then(a.cmp(&b)));
                o
            })
            .collect();
        Self {
            cols,
            rows: sample.to_vec(),
            order,
        }
    }

    /// Fits a tree to `y` (indexed by row of `x`). With `mtry < d` each
    /// split considers a fresh random subset of `mtry` features.
    pub fn fit<R: Rng>(&self, y: &[T], max_depth: usize, mtry: usize, rng: &mut R) -> Tree<T> {
        let d = self.cols.len();
        let mut state = Build {
            b: self,
            y: self.rows.iter().map(|&r| y[r]).collect(),
            order: self.order.clone(),
            go_left: vec![false; self.rows.len()],
            buf: Vec::with_capacity(self.rows.len()),
            nodes: Vec::new(),
            max_depth,
            mtry: mtry.clamp(1, d.max(1)),
        };
        state.grow(0, self.rows.len(), 0, rng);
        Tree { nodes: state.nodes }
    }
}

struct Build<'a, T> {
    b: &'a TreeBuilder<T>,
    y: Vec<T>,
    order: Vec<Vec<usize>>,
    go_left: Vec<bool>,
    buf: Vec<usize>,
    nodes: Vec<Node<T>>,
    max_depth: usize,
    mtry: usize,
}

impl<T: Scalar> Build<'_, T> {
    fn positions(&self, lo: usize, hi: usize) -> &[usize] {
        match self.order.first() {
            Some(o) => &o[lo..hi],
            None => &[],
        }
    }

    fn grow<R: Rng>(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let n = T::from_usize_lossy(hi - lo);
        let ys: Vec<T> = if self.order.is_empty() {
            self.y.clone()
        } else {
            self.positions(lo, hi).iter().map(|&p| self.y[p]).collect()
        };
        let total: T = ys.iter().copied().sum();
        let mean = total / n;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.max_depth || hi - lo < 2 || self.order.is_empty() {
            return id;
        }
        let sse: T = ys.iter().map(|&v| (v - mean) * (v - mean)).sum();
        if !(sse > T::zero()) {
            return id;
        }

        let d = self.order.len();
        let features: Vec<usize> = if self.mtry >= d {
            (0..d).collect()
        } else {
            let mut f = sample(rng, d, self.mtry).into_vec();
            f.sort_unstable();
            f
        };

        // Gain = SSE reduction = S_l²/n_l + S_r²/n_r − S²/n.
        let base = total * total / n;
        let min_gain = sse * T::lit(1e-10);
        let mut best: Option<(T, usize, T)> = None;
        for &f in &features {
            let col = &self.b.cols[f];
            let ord = &self.order[f][lo..hi];
            let mut sum_l = T::zero();
            for k in 0..ord.len() - 1 {
                sum_l += self.y[ord[k]];
                let (v, next) = (col[ord[k]], col[ord[k + 1]]);
                if !(v < next) {
                    continue;
                }
                let nl = T::from_usize_lossy(k + 1);
                let nr = n - nl;
                let sum_r = total - sum_l;
                let gain = sum_l * sum_l / nl + sum_r * sum_r / nr - base;
                if gain > min_gain && best.is_none_or(|(g, _, _)| gain > g) {
                    let mut t = v + (next - v) / T::lit(2.0);
                    if !(t < next) {
                        t = v;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };

        let col = &self.b.cols[feature];
        for &p in &self.order[feature][lo..hi] {
            self.go_left[p] = col[p] <= threshold;
        }
        let mut n_left = 0;
        for o in &mut self.order {
            self.buf.clear();
            let seg = &mut o[lo..hi];
            let mut w = 0;
            for k in 0..seg.len() {
                let p = seg[k];
                if self.go_left[p] {
                    seg[w] = p;
                    w += 1;
                } else {
                    self.buf.push(p);
                }
            }
            seg[w..].copy_from_slice(&self.buf);
            n_left = w;
        }
        let left = self.grow(lo, lo + n_left, depth + 1, rng);
        let right = self.grow(lo + n_left, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}
