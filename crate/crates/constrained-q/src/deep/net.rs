//! Hand-rolled value networks on flat `f64` parameter vectors.
//!
//! The set network encodes each visible neighbor with a shared two-layer MLP,
//! sum-pools the embeddings (so the input is order- and count-invariant),
//! post-processes the pool, concatenates the ego features and runs a trunk
//! into one linear head that emits `A` Q-values plus `A * H` truncated
//! constraint-value outputs. The linear network is a single bias-free layer
//! over a dense input; driven with one-hot states it reproduces tabular
//! learning exactly.

use super::encode::{NetInput, EGO_FEATURES, NEIGHBOR_FEATURES};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One forward pass: Q per action, and truncated constraint values laid out
/// action-major (`j[a * horizon + (h - 1)]`).
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    pub q: Vec<f64>,
    pub j: Vec<f64>,
}

impl NetOutput {
    pub fn j_for_action(&self, action: usize, horizon: usize) -> &[f64] {
        &self.j[action * horizon..(action + 1) * horizon]
    }
}

pub trait ValueNet {
    fn n_params(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Number of truncated-value heads per action (0 = Q only).
    fn horizon(&self) -> usize;
    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn forward(&self, params: &[f64], input: NetInput<'_>) -> NetOutput;
    /// Accumulates `d(loss)/d(params)` into `grad`, where the loss gradient
    /// with respect to the outputs is `grad_q` / `grad_j` (same layout as
    /// [`NetOutput`]). Recomputes the forward pass internally.
    fn backward(
        &self,
        params: &[f64],
        input: NetInput<'_>,
        grad_q: &[f64],
        grad_j: &[f64],
        grad: &mut [f64],
    );
    /// Identifies the architecture in checkpoints.
    fn arch_tag(&self) -> u32;
    fn arch_dims(&self) -> Vec<u32>;
}

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// row-major `rows x cols`; `bias` is `usize::MAX` for bias-free layers.
#[derive(Debug, Clone, Copy)]
struct Lin {
    w: usize,
    bias: usize,
    rows: usize,
    cols: usize,
}

impl Lin {
    fn apply(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = if self.bias == usize::MAX { 0.0 } else { params[self.bias + r] };
            let row = &params[self.w + r * self.cols..self.w + (r + 1) * self.cols];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            y[r] = acc;
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    fn backward(&self, params: &[f64], x: &[f64], gy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.cols];
        for r in 0..self.rows {
            let g = gy[r];
            if g == 0.0 {
                continue;
            }
            if self.bias != usize::MAX {
                grad[self.bias + r] += g;
            }
            let wrow = self.w + r * self.cols;
            for c in 0..self.cols {
                grad[wrow + c] += g * x[c];
                gx[c] += params[wrow + c] * g;
            }
        }
        gx
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries where the forward activation was clamped.
fn relu_backward(activation: &[f64], g: &mut [f64]) {
    for (gi, &a) in g.iter_mut().zip(activation) {
        if a <= 0.0 {
            *gi = 0.0;
        }
    }
}

const PHI_HIDDEN: usize = 20;
const PHI_OUT: usize = 80;
const RHO_HIDDEN: usize = 80;
const RHO_OUT: usize = 20;
const TRUNK_HIDDEN: usize = 100;

/// Permutation-invariant set network with Q and truncated-value heads.
#[derive(Debug, Clone)]
pub struct SetNet {
    n_actions: usize,
    horizon: usize,
    phi1: Lin,
    phi2: Lin,
    rho1: Lin,
    rho2: Lin,
    tr1: Lin,
    tr2: Lin,
    head: Lin,
    n_params: usize,
}

impl SetNet {
    pub fn new(n_actions: usize, horizon: usize) -> Self {
        let mut offset = 0;
        let mut lin = |rows: usize, cols: usize| {
            let l = Lin { w: offset, bias: offset + rows * cols, rows, cols };
            offset += rows * cols + rows;
            l
        };
        let phi1 = lin(PHI_HIDDEN, NEIGHBOR_FEATURES);
        let phi2 = lin(PHI_OUT, PHI_HIDDEN);
        let rho1 = lin(RHO_HIDDEN, PHI_OUT);
        let rho2 = lin(RHO_OUT, RHO_HIDDEN);
        let tr1 = lin(TRUNK_HIDDEN, RHO_OUT + EGO_FEATURES);
        let tr2 = lin(TRUNK_HIDDEN, TRUNK_HIDDEN);
        let head = lin(n_actions * (1 + horizon), TRUNK_HIDDEN);
        SetNet { n_actions, horizon, phi1, phi2, rho1, rho2, tr1, tr2, head, n_params: offset }
    }

    fn layers(&self) -> [Lin; 7] {
        [self.phi1, self.phi2, self.rho1, self.rho2, self.tr1, self.tr2, self.head]
    }

    fn split_input<'a>(&self, input: NetInput<'a>) -> (&'a [f64], &'a [f64]) {
        match input {
            NetInput::Set { neighbors, ego } => {
                assert_eq!(neighbors.len() % NEIGHBOR_FEATURES, 0);
                assert_eq!(ego.len(), EGO_FEATURES);
                (neighbors, ego)
            }
            NetInput::Flat(_) => panic!("set network needs a set input"),
        }
    }

    fn trace(&self, params: &[f64], neighbors: &[f64], ego: &[f64]) -> Trace {
        let n = neighbors.len() / NEIGHBOR_FEATURES;
        let mut per_neighbor = Vec::with_capacity(n);
        let mut pooled = vec![0.0; PHI_OUT];
        for i in 0..n {
            let row = &neighbors[i * NEIGHBOR_FEATURES..(i + 1) * NEIGHBOR_FEATURES];
            let mut h1 = self.phi1.apply(params, row);
            relu(&mut h1);
            let mut h2 = self.phi2.apply(params, &h1);
            relu(&mut h2);
            for (p, h) in pooled.iter_mut().zip(&h2) {
                *p += h;
            }
            per_neighbor.push((h1, h2));
        }
        let mut r1 = self.rho1.apply(params, &pooled);
        relu(&mut r1);
        let mut r2 = self.rho2.apply(params, &r1);
        relu(&mut r2);
        let mut cat = Vec::with_capacity(RHO_OUT + EGO_FEATURES);
        cat.extend_from_slice(&r2);
        cat.extend_from_slice(ego);
        let mut t1 = self.tr1.apply(params, &cat);
        relu(&mut t1);
        let mut t2 = self.tr2.apply(params, &t1);
        relu(&mut t2);
        let out = self.head.apply(params, &t2);
        Trace { per_neighbor, pooled, r1, cat, t1, t2, out }
    }
}

struct Trace {
    per_neighbor: Vec<(Vec<f64>, Vec<f64>)>,
    pooled: Vec<f64>,
    r1: Vec<f64>,
    cat: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    out: Vec<f64>,
}

impl ValueNet for SetNet {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params];
        for l in self.layers() {
            let bound = 1.0 / (l.cols as f64).sqrt();
            for w in &mut params[l.w..l.w + l.rows * l.cols] {
                *w = rng.gen_range(-bound..bound);
            }
            // Biases stay zero.
        }
        params
    }

    fn forward(&self, params: &[f64], input: NetInput<'_>) -> NetOutput {
        let (neighbors, ego) = self.split_input(input);
        let trace = self.trace(params, neighbors, ego);
        let (q, j) = trace.out.split_at(self.n_actions);
        NetOutput { q: q.to_vec(), j: j.to_vec() }
    }

    fn backward(
        &self,
        params: &[f64],
        input: NetInput<'_>,
        grad_q: &[f64],
        grad_j: &[f64],
        grad: &mut [f64],
    ) {
        assert_eq!(grad_q.len(), self.n_actions);
        assert_eq!(grad_j.len(), self.n_actions * self.horizon);
        let (neighbors, ego) = self.split_input(input);
        let trace = self.trace(params, neighbors, ego);

        let mut g_out = Vec::with_capacity(trace.out.len());
        g_out.extend_from_slice(grad_q);
        g_out.extend_from_slice(grad_j);

        let mut g_t2 = self.head.backward(params, &trace.t2, &g_out, grad);
        relu_backward(&trace.t2, &mut g_t2);
        let mut g_t1 = self.tr2.backward(params, &trace.t1, &g_t2, grad);
        relu_backward(&trace.t1, &mut g_t1);
        let g_cat = self.tr1.backward(params, &trace.cat, &g_t1, grad);
        // Ego features are data; only the pooled branch flows further back.
        let mut g_r2 = g_cat[..RHO_OUT].to_vec();
        relu_backward(&trace.cat[..RHO_OUT], &mut g_r2);
        let mut g_r1 = self.rho2.backward(params, &trace.r1, &g_r2, grad);
        relu_backward(&trace.r1, &mut g_r1);
        let g_pooled = self.rho1.backward(params, &trace.pooled, &g_r1, grad);
        for (i, (h1, h2)) in trace.per_neighbor.iter().enumerate() {
            let mut g_h2 = g_pooled.clone();
            relu_backward(h2, &mut g_h2);
            let mut g_h1 = self.phi2.backward(params, h1, &g_h2, grad);
            relu_backward(h1, &mut g_h1);
            let row = &neighbors[i * NEIGHBOR_FEATURES..(i + 1) * NEIGHBOR_FEATURES];
            self.phi1.backward(params, row, &g_h1, grad);
        }
    }

    fn arch_tag(&self) -> u32 {
        1
    }

    fn arch_dims(&self) -> Vec<u32> {
        vec![
            self.n_actions as u32,
            self.horizon as u32,
            NEIGHBOR_FEATURES as u32,
            PHI_HIDDEN as u32,
            PHI_OUT as u32,
            RHO_HIDDEN as u32,
            RHO_OUT as u32,
            EGO_FEATURES as u32,
            TRUNK_HIDDEN as u32,
        ]
    }
}

/// Single bias-free linear layer over a dense input. With one-hot inputs,
/// zero initialization and plain SGD at half the tabular learning rate, its
/// Q-updates coincide with tabular Q-learning exactly.
#[derive(Debug, Clone)]
pub struct LinearNet {
    n_inputs: usize,
    n_actions: usize,
    horizon: usize,
}

impl LinearNet {
    pub fn new(n_inputs: usize, n_actions: usize, horizon: usize) -> Self {
        LinearNet { n_inputs, n_actions, horizon }
    }

    fn out_dim(&self) -> usize {
        self.n_actions * (1 + self.horizon)
    }
}

impl ValueNet for LinearNet {
    fn n_params(&self) -> usize {
        self.out_dim() * self.n_inputs
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn init_params(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![0.0; self.n_params()]
    }

    fn forward(&self, params: &[f64], input: NetInput<'_>) -> NetOutput {
        let x = match input {
            NetInput::Flat(x) => x,
            NetInput::Set { .. } => panic!("linear network needs a flat input"),
        };
        assert_eq!(x.len(), self.n_inputs);
        let mut out = vec![0.0; self.out_dim()];
        for (o, out_o) in out.iter_mut().enumerate() {
            let row = &params[o * self.n_inputs..(o + 1) * self.n_inputs];
            *out_o = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        }
        let (q, j) = out.split_at(self.n_actions);
        NetOutput { q: q.to_vec(), j: j.to_vec() }
    }

    fn backward(
        &self,
        _params: &[f64],
        input: NetInput<'_>,
        grad_q: &[f64],
        grad_j: &[f64],
        grad: &mut [f64],
    ) {
        let x = match input {
            NetInput::Flat(x) => x,
            NetInput::Set { .. } => panic!("linear network needs a flat input"),
        };
        for (o, &g) in grad_q.iter().chain(grad_j).enumerate() {
            if g == 0.0 {
                continue;
            }
            for (c, &xi) in x.iter().enumerate() {
                grad[o * self.n_inputs + c] += g * xi;
            }
        }
    }

    fn arch_tag(&self) -> u32 {
        2
    }

    fn arch_dims(&self) -> Vec<u32> {
        vec![self.n_actions as u32, self.horizon as u32, self.n_inputs as u32]
    }
}
