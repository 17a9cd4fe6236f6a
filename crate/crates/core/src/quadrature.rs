//! Gauss-Legendre rules and deterministic tensor-product quadrature.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const MIN_ORDER: usize = 8;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let k = (i + 1) as f64;
        let nf = n as f64;
        let theta = std::f64::consts::PI * (k - 0.25) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf.powi(3))) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Sum in a fixed binary tree, independent of thread scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2..=8 => v.iter().sum(),
        len => {
            let (a, b) = v.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Tensor Gauss-Legendre rule on an axis-aligned box.
#[derive(Clone, Debug)]
pub struct TensorRule {
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl TensorRule {
    pub fn new(lo: &[f64], hi: &[f64], order: usize) -> Result<Self> {
        if order < MIN_ORDER {
            return Err(Error::InvalidParameter(format!(
                "quadrature order {order} is below the minimum {MIN_ORDER}"
            )));
        }
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("empty quadrature box".into()));
        }
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(lo.len());
        let mut weights = Vec::with_capacity(lo.len());
        for (&a, &b) in lo.iter().zip(hi) {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            nodes.push(x.iter().map(|t| mid + half * t).collect());
            weights.push(w.iter().map(|t| half * t).collect());
        }
        Ok(Self { nodes, weights })
    }

    /// The cube `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64, order: usize) -> Result<Self> {
        Self::new(&vec![-r; dim], &vec![r; dim], order)
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn order(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn len(&self) -> usize {
        self.order().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integrates several functionals at once. `f` receives the node and writes
    /// `k` values into its output slice. Sharded on the first axis; each shard
    /// sums its points pairwise and the shard totals are summed pairwise, so the
    /// result does not depend on the thread count.
    pub fn integrate_many<F>(&self, k: usize, f: F) -> Vec<f64>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let d = self.dim();
        let m = self.order();
        let inner = m.pow(d as u32 - 1);
        let shards: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i0| {
                let mut y = vec![0.0; d];
                let mut out = vec![0.0; k];
                let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(inner); k];
                let mut idx = vec![0usize; d];
                idx[0] = i0;
                for flat in 0..inner {
                    let mut r = flat;
                    for a in (1..d).rev() {
                        idx[a] = r % m;
                        r /= m;
                    }
                    let mut w = 1.0;
                    for a in 0..d {
                        y[a] = self.nodes[a][idx[a]];
                        w *= self.weights[a][idx[a]];
                    }
                    f(&y, &mut out);
                    for j in 0..k {
                        acc[j].push(w * out[j]);
                    }
                }
                acc.iter().map(|v| pairwise_sum(v)).collect()
            })
            .collect();
        (0..k)
            .map(|j| pairwise_sum(&shards.iter().map(|s| s[j]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.integrate_many(1, |y, out| out[0] = f(y))[0]
    }
}
