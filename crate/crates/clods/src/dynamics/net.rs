//! Encode-process-decode message-passing network with a hand-written
//! backward pass.
//!
//! All trainable weights live in one flat `f64` vector; [`Layout`] maps
//! named tensors to ranges of it, so the optimizer, the checkpoint codec,
//! and gradient checks all see the same storage. Every building block is
//! a two-layer ReLU MLP; all but the decoder end in layer normalization,
//! which keeps latents bounded through deep block stacks without any
//! tuning. Edge and node updates are residual, messages aggregate by a
//! fixed-order sum over the directed edge list, so results are
//! deterministic and node-permutation-equivariant up to float
//! reassociation in the sums.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::graph::{MeshGraph, EDGE_FEATS, NODE_FEATS};
use crate::error::{Error, Result};

/// Variance floor inside layer normalization. The standard 1e-5 keeps the
/// inverse standard deviation (and with it the curvature of the loss)
/// bounded even when a row's activations nearly coincide.
pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;
/// Output dimension: one 3-vector acceleration per node.
pub const ACCEL_DIM: usize = 3;

/// Per-feature affine normalization, with accumulate-then-freeze
/// statistics. Until frozen the transform uses whatever the accumulators
/// currently hold (identity when empty); training freezes all stats after
/// its first epoch so later results cannot depend on batch composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub frozen: bool,
    #[serde(skip)]
    count: f64,
    #[serde(skip)]
    sum: Vec<f64>,
    #[serde(skip)]
    sum_sq: Vec<f64>,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            frozen: false,
            count: 0.0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    /// A frozen normalizer with given statistics (checkpoint load path).
    pub fn from_stats(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} means vs {} stds",
                mean.len(),
                std.len()
            )));
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParams("normalizer std must be positive".into()));
        }
        let dim = mean.len();
        Ok(Self { mean, std, frozen: true, count: 0.0, sum: vec![0.0; dim], sum_sq: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds rows into the running statistics and refreshes mean/std.
    /// No-op once frozen.
    pub fn accumulate(&mut self, rows: ArrayView2<f64>) {
        if self.frozen || rows.nrows() == 0 {
            return;
        }
        assert_eq!(rows.ncols(), self.dim(), "normalizer dimension");
        for row in rows.rows() {
            for (c, &v) in row.iter().enumerate() {
                self.sum[c] += v;
                self.sum_sq[c] += v * v;
            }
        }
        self.count += rows.nrows() as f64;
        for c in 0..self.dim() {
            self.mean[c] = self.sum[c] / self.count;
            let var = (self.sum_sq[c] / self.count - self.mean[c] * self.mean[c]).max(0.0);
            self.std[c] = var.sqrt().max(1e-8);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// `(x - mean) / std`, row-wise.
    pub fn normalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        assert_eq!(rows.ncols(), self.dim(), "normalizer dimension");
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    /// Gradient of [`Self::normalize`]: `d_raw = d_normalized / std`.
    pub fn normalize_grad(&self, d_norm: &Array2<f64>) -> Array2<f64> {
        assert_eq!(d_norm.ncols(), self.dim(), "normalizer dimension");
        let mut out = d_norm.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v /= self.std[c];
            }
        }
        out
    }

    /// `x * std + mean`, the inverse map, used on predicted accelerations.
    pub fn denormalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        assert_eq!(rows.ncols(), self.dim(), "normalizer dimension");
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        out
    }
}

/// Normalization statistics for the three tensor families the network
/// touches: node features in, edge features in, accelerations out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node: Normalizer,
    pub edge: Normalizer,
    pub accel: Normalizer,
}

impl NormStats {
    pub fn new() -> Self {
        Self {
            node: Normalizer::new(NODE_FEATS),
            edge: Normalizer::new(EDGE_FEATS),
            accel: Normalizer::new(ACCEL_DIM),
        }
    }

    pub fn freeze(&mut self) {
        self.node.freeze();
        self.edge.freeze();
        self.accel.freeze();
    }

    pub fn frozen(&self) -> bool {
        self.node.frozen && self.edge.frozen && self.accel.frozen
    }
}

impl Default for NormStats {
    fn default() -> Self {
        Self::new()
    }
}

/// One two-layer MLP's tensor ranges inside the flat parameter vector:
/// `w1 (d_in x d_hidden), b1, w2 (d_hidden x d_out), b2`, then layer-norm
/// gain and bias when `ln` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MlpSpec {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub ln: bool,
    pub offset: usize,
}

impl MlpSpec {
    fn len(&self) -> usize {
        let core = self.d_in * self.d_hidden
            + self.d_hidden
            + self.d_hidden * self.d_out
            + self.d_out;
        core + if self.ln { 2 * self.d_out } else { 0 }
    }

    pub(crate) fn w1(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.d_in * self.d_hidden
    }

    pub(crate) fn b1(&self) -> std::ops::Range<usize> {
        let s = self.w1().end;
        s..s + self.d_hidden
    }

    pub(crate) fn w2(&self) -> std::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.d_hidden * self.d_out
    }

    pub(crate) fn b2(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.d_out
    }

    pub(crate) fn ln_gain(&self) -> std::ops::Range<usize> {
        debug_assert!(self.ln);
        let s = self.b2().end;
        s..s + self.d_out
    }

    pub(crate) fn ln_bias(&self) -> std::ops::Range<usize> {
        let s = self.ln_gain().end;
        s..s + self.d_out
    }
}

/// Tensor map for a (width, blocks) architecture over the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub width: usize,
    pub blocks: usize,
    pub enc_node: MlpSpec,
    pub enc_edge: MlpSpec,
    /// Per block: (edge update MLP, node update MLP).
    pub block_mlps: Vec<(MlpSpec, MlpSpec)>,
    pub decoder: MlpSpec,
    pub total: usize,
}

impl Layout {
    pub fn new(width: usize, blocks: usize) -> Self {
        let mut offset = 0;
        let mut push = |d_in: usize, d_out: usize, ln: bool| {
            let spec = MlpSpec { d_in, d_hidden: width, d_out, ln, offset };
            offset += spec.len();
            spec
        };
        let enc_node = push(NODE_FEATS, width, true);
        let enc_edge = push(EDGE_FEATS, width, true);
        let block_mlps = (0..blocks)
            .map(|_| {
                let edge = push(3 * width, width, true);
                let node = push(2 * width, width, true);
                (edge, node)
            })
            .collect();
        let decoder = push(width, ACCEL_DIM, false);
        Layout { width, blocks, enc_node, enc_edge, block_mlps, decoder, total: offset }
    }
}

/// The full trainable state of the dynamics network.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub width: usize,
    pub blocks: usize,
    /// All weights, in [`Layout`] order.
    pub theta: Vec<f64>,
    pub norm: NormStats,
}

impl GnnParams {
    /// Xavier-uniform weights, zero biases, identity layer norms.
    pub fn new(width: usize, blocks: usize, seed: u64) -> Result<Self> {
        if width == 0 || blocks == 0 {
            return Err(Error::InvalidParams(format!(
                "network needs positive width and blocks, got {width}x{blocks}"
            )));
        }
        let layout = Layout::new(width, blocks);
        let mut theta = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init_mlp = |spec: &MlpSpec, theta: &mut Vec<f64>| {
            for (range, fan_in, fan_out) in [
                (spec.w1(), spec.d_in, spec.d_hidden),
                (spec.w2(), spec.d_hidden, spec.d_out),
            ] {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut theta[range] {
                    *v = rng.gen_range(-limit..limit);
                }
            }
            if spec.ln {
                theta[spec.ln_gain()].fill(1.0);
            }
        };
        init_mlp(&layout.enc_node, &mut theta);
        init_mlp(&layout.enc_edge, &mut theta);
        for (edge, node) in &layout.block_mlps {
            init_mlp(edge, &mut theta);
            init_mlp(node, &mut theta);
        }
        init_mlp(&layout.decoder, &mut theta);
        Ok(Self { width, blocks, theta, norm: NormStats::new() })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.width, self.blocks)
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let layout = Layout::new(self.width, self.blocks);
        if self.theta.len() != layout.total {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a {}x{} layout needing {}",
                self.theta.len(),
                self.width,
                self.blocks,
                layout.total
            )));
        }
        if !self.theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("non-finite network parameter".into()));
        }
        Ok(())
    }
}

fn view<'a>(theta: &'a [f64], range: std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &theta[range]).expect("layout range")
}

/// Saved intermediates of one MLP application.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    x: Array2<f64>,
    /// Pre-ReLU hidden activations.
    h_pre: Array2<f64>,
    /// Pre-layer-norm outputs (only kept when the MLP has an LN head).
    ln: Option<LnCache>,
}

#[derive(Debug, Clone)]
struct LnCache {
    /// Row-wise standardized outputs (before gain/bias).
    x_hat: Array2<f64>,
    /// Row-wise 1 / sqrt(var + eps).
    inv_std: Array1<f64>,
}

fn mlp_forward(spec: &MlpSpec, theta: &[f64], x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
    debug_assert_eq!(x.ncols(), spec.d_in);
    let w1 = view(theta, spec.w1(), spec.d_in, spec.d_hidden);
    let w2 = view(theta, spec.w2(), spec.d_hidden, spec.d_out);
    let b1 = &theta[spec.b1()];
    let b2 = &theta[spec.b2()];

    let mut h_pre = x.dot(&w1);
    for mut row in h_pre.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += b1[c];
        }
    }
    let h = h_pre.mapv(|v| v.max(0.0));
    let mut y = h.dot(&w2);
    for mut row in y.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += b2[c];
        }
    }

    if !spec.ln {
        return (y, MlpCache { x: x.clone(), h_pre, ln: None });
    }

    let gain = &theta[spec.ln_gain()];
    let bias = &theta[spec.ln_bias()];
    let n = spec.d_out as f64;
    let mut x_hat = y;
    let mut inv_std = Array1::zeros(x_hat.nrows());
    for (r, mut row) in x_hat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = is;
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
    }
    let mut out = x_hat.clone();
    for mut row in out.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * gain[c] + bias[c];
        }
    }
    (out, MlpCache { x: x.clone(), h_pre, ln: Some(LnCache { x_hat, inv_std }) })
}

/// Backward through one MLP application; accumulates parameter gradients
/// into `grad` (same layout as theta) and returns the input gradient.
fn mlp_backward(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &MlpCache,
    d_out: &Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let d_y = match &cache.ln {
        None => d_out.clone(),
        Some(ln) => {
            let gain = &theta[spec.ln_gain()];
            let n = spec.d_out as f64;
            // d gain/bias accumulate over rows; d y via the standard
            // layer-norm gradient with x_hat and inv_std cached.
            {
                let g_gain = &mut grad[spec.ln_gain()];
                for (row, xh) in d_out.rows().into_iter().zip(ln.x_hat.rows()) {
                    for (c, (&d, &x)) in row.iter().zip(xh).enumerate() {
                        g_gain[c] += d * x;
                    }
                }
            }
            {
                let g_bias = &mut grad[spec.ln_bias()];
                for row in d_out.rows() {
                    for (c, &d) in row.iter().enumerate() {
                        g_bias[c] += d;
                    }
                }
            }
            let mut d_y = Array2::zeros(d_out.dim());
            for (r, (row, xh)) in d_out.rows().into_iter().zip(ln.x_hat.rows()).enumerate() {
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for (c, (&d, &x)) in row.iter().zip(xh).enumerate() {
                    let gd = gain[c] * d;
                    sum_g += gd;
                    sum_gx += gd * x;
                }
                let (m_g, m_gx) = (sum_g / n, sum_gx / n);
                for (c, (&d, &x)) in row.iter().zip(xh).enumerate() {
                    d_y[[r, c]] = (gain[c] * d - m_g - x * m_gx) * ln.inv_std[r];
                }
            }
            d_y
        }
    };

    let w1 = view(theta, spec.w1(), spec.d_in, spec.d_hidden);
    let w2 = view(theta, spec.w2(), spec.d_hidden, spec.d_out);
    let h = cache.h_pre.mapv(|v| v.max(0.0));

    // Second linear layer.
    let d_w2 = h.t().dot(&d_y);
    grad[spec.w2()]
        .iter_mut()
        .zip(d_w2.iter())
        .for_each(|(g, &d)| *g += d);
    {
        let g_b2 = &mut grad[spec.b2()];
        for row in d_y.rows() {
            for (c, &d) in row.iter().enumerate() {
                g_b2[c] += d;
            }
        }
    }

    // ReLU and first linear layer.
    let mut d_h = d_y.dot(&w2.t());
    d_h.zip_mut_with(&cache.h_pre, |d, &pre| {
        if pre <= 0.0 {
            *d = 0.0;
        }
    });
    let d_w1 = cache.x.t().dot(&d_h);
    grad[spec.w1()]
        .iter_mut()
        .zip(d_w1.iter())
        .for_each(|(g, &d)| *g += d);
    {
        let g_b1 = &mut grad[spec.b1()];
        for row in d_h.rows() {
            for (c, &d) in row.iter().enumerate() {
                g_b1[c] += d;
            }
        }
    }
    d_h.dot(&w1.t())
}

/// Everything the backward pass needs from one forward application.
#[derive(Debug, Clone)]
pub struct GnnCache {
    enc_node: MlpCache,
    enc_edge: MlpCache,
    /// Per block: edge MLP cache, node MLP cache.
    blocks: Vec<(MlpCache, MlpCache)>,
    decoder: MlpCache,
    senders: Vec<u32>,
    receivers: Vec<u32>,
}

fn concat_cols(parts: &[ArrayView2<f64>]) -> Array2<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut at = 0;
    for p in parts {
        out.slice_mut(s![.., at..at + p.ncols()]).assign(p);
        at += p.ncols();
    }
    out
}

/// Rows of `node_rows` gathered by `index`.
fn gather(node_rows: &Array2<f64>, index: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((index.len(), node_rows.ncols()));
    for (r, &i) in index.iter().enumerate() {
        out.row_mut(r).assign(&node_rows.row(i as usize));
    }
    out
}

/// Predicts one normalized acceleration per node. The cache holds every
/// intermediate needed by [`gnn_backward`].
pub fn gnn_forward(params: &GnnParams, graph: &MeshGraph) -> Result<(Array2<f64>, GnnCache)> {
    params.validate()?;
    graph.validate()?;
    let layout = params.layout();
    let theta = &params.theta;

    let node_in = params.norm.node.normalize(&graph.node_feats);
    let edge_in = params.norm.edge.normalize(&graph.edge_feats);

    let (mut n_lat, enc_node) = mlp_forward(&layout.enc_node, theta, &node_in);
    let (mut e_lat, enc_edge) = mlp_forward(&layout.enc_edge, theta, &edge_in);

    let mut blocks = Vec::with_capacity(params.blocks);
    for (edge_spec, node_spec) in &layout.block_mlps {
        let edge_mlp_in = concat_cols(&[
            e_lat.view(),
            gather(&n_lat, &graph.senders).view(),
            gather(&n_lat, &graph.receivers).view(),
        ]);
        let (de, edge_cache) = mlp_forward(edge_spec, theta, &edge_mlp_in);
        e_lat += &de;

        // Fixed-order sum of incoming messages at each receiver.
        let mut agg = Array2::zeros((n_lat.nrows(), params.width));
        for (row, &r) in graph.receivers.iter().enumerate() {
            let mut dst = agg.row_mut(r as usize);
            dst += &e_lat.row(row);
        }
        let node_mlp_in = concat_cols(&[n_lat.view(), agg.view()]);
        let (dn, node_cache) = mlp_forward(node_spec, theta, &node_mlp_in);
        n_lat += &dn;
        blocks.push((edge_cache, node_cache));
    }

    let (accel, decoder) = mlp_forward(&layout.decoder, theta, &n_lat);
    let cache = GnnCache {
        enc_node,
        enc_edge,
        blocks,
        decoder,
        senders: graph.senders.clone(),
        receivers: graph.receivers.clone(),
    };
    Ok((accel, cache))
}

/// Backward of [`gnn_forward`]: given the gradient of some scalar with
/// respect to the normalized accelerations, returns (parameter gradient,
/// gradient wrt raw node features, gradient wrt raw edge features).
pub fn gnn_backward(
    params: &GnnParams,
    cache: &GnnCache,
    d_accel: &Array2<f64>,
) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let layout = params.layout();
    let theta = &params.theta;
    let w = params.width;
    let mut grad = vec![0.0; theta.len()];

    let mut d_n = mlp_backward(&layout.decoder, theta, &cache.decoder, d_accel, &mut grad);
    let mut d_e: Array2<f64> = Array2::zeros((cache.senders.len(), w));

    for (p, (edge_spec, node_spec)) in layout.block_mlps.iter().enumerate().rev() {
        let (edge_cache, node_cache) = &cache.blocks[p];

        // Node update: n1 = n0 + f([n0, agg]).
        let d_node_in = mlp_backward(node_spec, theta, node_cache, &d_n, &mut grad);
        let mut d_n0 = d_n; // residual path
        d_n0 += &d_node_in.slice(s![.., 0..w]);
        let d_agg = d_node_in.slice(s![.., w..2 * w]);

        // Aggregation: each directed edge's updated latent went to its
        // receiver's sum.
        let mut d_e1 = d_e; // gradient carried from later blocks
        for (row, &r) in cache.receivers.iter().enumerate() {
            let mut dst = d_e1.row_mut(row);
            dst += &d_agg.row(r as usize);
        }

        // Edge update: e1 = e0 + f([e0, n0[s], n0[r]]).
        let d_edge_in = mlp_backward(edge_spec, theta, edge_cache, &d_e1, &mut grad);
        let mut d_e0 = d_e1; // residual path
        d_e0 += &d_edge_in.slice(s![.., 0..w]);
        for (row, (&s_i, &r_i)) in cache.senders.iter().zip(&cache.receivers).enumerate() {
            let mut ds = d_n0.row_mut(s_i as usize);
            ds += &d_edge_in.slice(s![row, w..2 * w]);
            let mut dr = d_n0.row_mut(r_i as usize);
            dr += &d_edge_in.slice(s![row, 2 * w..3 * w]);
        }

        d_n = d_n0;
        d_e = d_e0;
    }

    let d_node_norm = mlp_backward(&layout.enc_node, theta, &cache.enc_node, &d_n, &mut grad);
    let d_edge_norm = mlp_backward(&layout.enc_edge, theta, &cache.enc_edge, &d_e, &mut grad);
    let d_node_raw = params.norm.node.normalize_grad(&d_node_norm);
    let d_edge_raw = params.norm.edge.normalize_grad(&d_edge_norm);
    Ok((grad, d_node_raw, d_edge_raw))
}

/// Zeroes the decoder's output layer so the network predicts exactly zero
/// acceleration; used to turn the dynamics into pure inertial
/// continuation in tests and diagnostics.
pub fn zero_decoder_output(params: &mut GnnParams) {
    let layout = params.layout();
    params.theta[layout.decoder.w2()].fill(0.0);
    params.theta[layout.decoder.b2()].fill(0.0);
}
