//! Multi-head graph attention layer with analytic backward pass.
//!
//! Per head `h` and node `i`, with a virtual self-loop added to every
//! neighborhood:
//!
//! ```text
//! z_j   = W x_j
//! e_ij  = LeakyReLU(attn_src . z_i + attn_dst . z_j)    j in adj(i) + {i}
//! a_ij  = softmax_j(e_ij)
//! out_i = sum_j a_ij z_j
//! ```
//!
//! Heads are concatenated (hidden layer) or averaged (output layer), then an
//! optional ELU is applied.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    ConcatHeads,
    AverageHeads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    /// Per-head projection, `in_dim x head_dim`.
    pub weights: Vec<Array2<f64>>,
    /// Per-head source-side attention vector (applied to `z_i`).
    pub attn_src: Vec<Array1<f64>>,
    /// Per-head destination-side attention vector (applied to `z_j`).
    pub attn_dst: Vec<Array1<f64>>,
    pub mode: HeadMode,
    pub activation: Activation,
    pub leaky_slope: f64,
}

impl GatLayer {
    /// Glorot-uniform initialization for the projections and attention
    /// vectors; no biases are used.
    pub fn init<R: Rng>(
        in_dim: usize,
        head_dim: usize,
        heads: usize,
        mode: HeadMode,
        activation: Activation,
        leaky_slope: f64,
        rng: &mut R,
    ) -> GatLayer {
        let glorot = |fan_in: usize, fan_out: usize, rng: &mut R| -> f64 {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.gen::<f64>() * 2.0 * limit - limit
        };
        let mut weights = Vec::with_capacity(heads);
        let mut attn_src = Vec::with_capacity(heads);
        let mut attn_dst = Vec::with_capacity(heads);
        for _ in 0..heads {
            weights.push(Array2::from_shape_fn((in_dim, head_dim), |_| {
                glorot(in_dim, head_dim, rng)
            }));
            attn_src.push(Array1::from_shape_fn(head_dim, |_| glorot(head_dim, 1, rng)));
            attn_dst.push(Array1::from_shape_fn(head_dim, |_| glorot(head_dim, 1, rng)));
        }
        GatLayer {
            weights,
            attn_src,
            attn_dst,
            mode,
            activation,
            leaky_slope,
        }
    }

    pub fn heads(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn out_dim(&self) -> usize {
        match self.mode {
            HeadMode::ConcatHeads => self.heads() * self.head_dim(),
            HeadMode::AverageHeads => self.head_dim(),
        }
    }
}

/// Flattened self-loop-augmented neighborhoods: entries for node `i` live at
/// `offsets[i]..offsets[i+1]`, with the self-loop last.
#[derive(Debug, Clone)]
pub(crate) struct Neighborhoods {
    pub neigh: Vec<u32>,
    pub offsets: Vec<usize>,
}

impl Neighborhoods {
    pub fn build(g: &HeteroGraph) -> Neighborhoods {
        let n = g.node_count();
        let mut neigh = Vec::with_capacity(2 * g.edge_count() + n);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for ix in 0..n as u32 {
            for &v in g.neighbors(crate::graph::NodeIndex(ix)) {
                neigh.push(v.0);
            }
            neigh.push(ix); // self-loop
            offsets.push(neigh.len());
        }
        Neighborhoods { neigh, offsets }
    }

}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug)]
pub(crate) struct GatCache {
    /// Per-head projected features `z = X W`, each `N x head_dim`.
    pub z: Vec<Array2<f64>>,
    /// Per-head attention weights, flattened in neighborhood order.
    pub alpha: Vec<Vec<f64>>,
    /// Per-head pre-LeakyReLU logits, same layout as `alpha`.
    pub pre: Vec<Vec<f64>>,
    /// Combined output before the layer activation.
    pub pre_act: Array2<f64>,
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub(crate) fn gat_forward_cached(
    layer: &GatLayer,
    x: &Array2<f64>,
    hoods: &Neighborhoods,
) -> Result<(Array2<f64>, GatCache)> {
    if x.ncols() != layer.in_dim() {
        return Err(Error::InvalidParameter(format!(
            "feature width {} does not match layer input dim {}",
            x.ncols(),
            layer.in_dim()
        )));
    }
    let n = x.nrows();
    let hd = layer.head_dim();
    let heads = layer.heads();
    let out_dim = layer.out_dim();

    let mut z_all = Vec::with_capacity(heads);
    let mut alpha_all = Vec::with_capacity(heads);
    let mut pre_all = Vec::with_capacity(heads);
    let mut pre_act = Array2::<f64>::zeros((n, out_dim));

    for h in 0..heads {
        let z = x.dot(&layer.weights[h]);
        let src_logit = z.dot(&layer.attn_src[h]); // per node i
        let dst_logit = z.dot(&layer.attn_dst[h]); // per node j
        let mut alpha = vec![0.0f64; hoods.neigh.len()];
        let mut pre = vec![0.0f64; hoods.neigh.len()];

        for i in 0..n {
            let (lo, hi) = (hoods.offsets[i], hoods.offsets[i + 1]);
            let mut max_e = f64::NEG_INFINITY;
            for (k, &j) in hoods.neigh[lo..hi].iter().enumerate() {
                let p = src_logit[i] + dst_logit[j as usize];
                pre[lo + k] = p;
                max_e = max_e.max(leaky(p, layer.leaky_slope));
            }
            let mut total = 0.0;
            for k in lo..hi {
                let w = (leaky(pre[k], layer.leaky_slope) - max_e).exp();
                alpha[k] = w;
                total += w;
            }
            for k in lo..hi {
                alpha[k] /= total;
            }

            // aggregate into the combined output
            let col0 = match layer.mode {
                HeadMode::ConcatHeads => h * hd,
                HeadMode::AverageHeads => 0,
            };
            let scale = match layer.mode {
                HeadMode::ConcatHeads => 1.0,
                HeadMode::AverageHeads => 1.0 / heads as f64,
            };
            for (k, &j) in hoods.neigh[lo..hi].iter().enumerate() {
                let a = alpha[lo + k] * scale;
                let zj = z.row(j as usize);
                let zj = zj.to_slice().expect("row-major");
                for (c, &v) in zj.iter().enumerate() {
                    pre_act[[i, col0 + c]] += a * v;
                }
            }
        }
        z_all.push(z);
        alpha_all.push(alpha);
        pre_all.push(pre);
    }

    let out = match layer.activation {
        Activation::Identity => pre_act.clone(),
        Activation::Elu => pre_act.mapv(elu),
    };
    Ok((
        out,
        GatCache {
            z: z_all,
            alpha: alpha_all,
            pre: pre_all,
            pre_act,
        },
    ))
}

/// Public single-layer forward (self-loops added virtually).
pub fn gat_forward(layer: &GatLayer, x: &Array2<f64>, g: &HeteroGraph) -> Result<Array2<f64>> {
    let hoods = Neighborhoods::build(g);
    gat_forward_cached(layer, x, &hoods).map(|(out, _)| out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerGrads {
    pub weights: Vec<Array2<f64>>,
    pub attn_src: Vec<Array1<f64>>,
    pub attn_dst: Vec<Array1<f64>>,
}

impl GatLayerGrads {
    pub fn zeros_like(layer: &GatLayer) -> GatLayerGrads {
        GatLayerGrads {
            weights: layer.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            attn_src: layer.attn_src.iter().map(|a| Array1::zeros(a.len())).collect(),
            attn_dst: layer.attn_dst.iter().map(|a| Array1::zeros(a.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GatLayerGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.attn_src.iter_mut().zip(&other.attn_src) {
            *a += b;
        }
        for (a, b) in self.attn_dst.iter_mut().zip(&other.attn_dst) {
            *a += b;
        }
    }
}

/// Backward pass through one layer. `d_out` is the loss gradient at the
/// layer output; returns parameter gradients and, when `need_dx`, the
/// gradient at the layer input.
pub(crate) fn gat_backward(
    layer: &GatLayer,
    x: &Array2<f64>,
    hoods: &Neighborhoods,
    cache: &GatCache,
    d_out: &Array2<f64>,
    need_dx: bool,
) -> (GatLayerGrads, Option<Array2<f64>>) {
    let n = x.nrows();
    let hd = layer.head_dim();
    let heads = layer.heads();

    // activation backward
    let d_comb: Array2<f64> = match layer.activation {
        Activation::Identity => d_out.clone(),
        Activation::Elu => {
            let mut d = d_out.clone();
            d.zip_mut_with(&cache.pre_act, |g, &p| *g *= elu_grad(p));
            d
        }
    };

    let mut grads = GatLayerGrads::zeros_like(layer);
    let mut dx = need_dx.then(|| Array2::<f64>::zeros((n, layer.in_dim())));

    let head_scale = match layer.mode {
        HeadMode::ConcatHeads => 1.0,
        HeadMode::AverageHeads => 1.0 / heads as f64,
    };

    for h in 0..heads {
        let z = &cache.z[h];
        let alpha = &cache.alpha[h];
        let pre = &cache.pre[h];
        let mut dz = Array2::<f64>::zeros((n, hd));
        let mut d_src_logit = vec![0.0f64; n]; // coefficient of attn_src . z_i
        let mut d_dst_logit = vec![0.0f64; n]; // coefficient of attn_dst . z_j

        for i in 0..n {
            let (lo, hi) = (hoods.offsets[i], hoods.offsets[i + 1]);
            // head-specific slice of the combined gradient
            let col0 = match layer.mode {
                HeadMode::ConcatHeads => h * hd,
                HeadMode::AverageHeads => 0,
            };
            let gi: Vec<f64> = (0..hd).map(|c| d_comb[[i, col0 + c]] * head_scale).collect();

            // dots_k = g_i . z_j and the softmax backward correction term
            let mut s_i = 0.0f64;
            let mut dots = Vec::with_capacity(hi - lo);
            for (k, &j) in hoods.neigh[lo..hi].iter().enumerate() {
                let zj = z.row(j as usize);
                let zj = zj.to_slice().expect("row-major");
                let dot: f64 = gi.iter().zip(zj).map(|(a, b)| a * b).sum();
                dots.push(dot);
                s_i += alpha[lo + k] * dot;
            }
            for (k, &j) in hoods.neigh[lo..hi].iter().enumerate() {
                let a = alpha[lo + k];
                let de = a * (dots[k] - s_i);
                let dpre = de * leaky_grad(pre[lo + k], layer.leaky_slope);
                d_src_logit[i] += dpre;
                d_dst_logit[j as usize] += dpre;
                // aggregation term: out_i += a_ij z_j
                let mut dz_j = dz.row_mut(j as usize);
                let dz_j = dz_j.as_slice_mut().expect("row-major");
                for (c, g) in gi.iter().enumerate() {
                    dz_j[c] += a * g;
                }
            }
        }

        // logits: src_logit_i = attn_src . z_i, dst_logit_j = attn_dst . z_j
        let a_src = &layer.attn_src[h];
        let a_dst = &layer.attn_dst[h];
        for i in 0..n {
            let (ds, dd) = (d_src_logit[i], d_dst_logit[i]);
            if ds != 0.0 || dd != 0.0 {
                let mut dz_i = dz.row_mut(i);
                let dz_i = dz_i.as_slice_mut().expect("row-major");
                let zi = z.row(i);
                let zi = zi.to_slice().expect("row-major");
                for c in 0..hd {
                    dz_i[c] += ds * a_src[c] + dd * a_dst[c];
                    grads.attn_src[h][c] += ds * zi[c];
                    grads.attn_dst[h][c] += dd * zi[c];
                }
            }
        }

        grads.weights[h] = x.t().dot(&dz);
        if let Some(dx) = dx.as_mut() {
            *dx += &dz.dot(&layer.weights[h].t());
        }
    }

    (grads, dx)
}
