//! Contrastive embedding refinement.
//!
//! A two-layer graph-attention encoder produces node embeddings `H`; a mean
//! readout turns the uncorrupted embeddings into a graph summary `s`; a
//! bilinear discriminator `D(h, s) = sigma(h^T W s)` is trained to score
//! true nodes above nodes encoded from row-shuffled features over the same
//! adjacency. Minimizing the resulting binary NLL drives node embeddings to
//! share information with the graph summary.

mod gat;

pub use gat::{gat_forward, Activation, GatLayer, GatLayerGrads, HeadMode};

use gat::{gat_backward, gat_forward_cached, GatCache, Neighborhoods};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::seed::{derive_seed, derive_seed_indexed, rng_from_seed};
use crate::skipgram::{ln_clamped, sigmoid, EmbeddingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgiParams {
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Early-stop window: training stops when the loss fails to improve by
    /// 1e-5 for this many consecutive epochs.
    pub patience: usize,
    pub leaky_slope: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DgiParams {
    fn default() -> Self {
        DgiParams {
            hidden_dim: 192,
            out_dim: 128,
            heads: 4,
            lr: 0.001,
            epochs: 300,
            patience: 20,
            leaky_slope: 0.2,
            seed: 0,
        }
    }
}

impl DgiParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.out_dim == 0 || self.heads == 0 {
            return Err(Error::InvalidParameter(
                "hidden_dim, out_dim and heads must be positive".into(),
            ));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "hidden_dim {} must be divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter("lr must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Initial node features: skip-gram embeddings, or one-hot rows for the
/// ablation without them.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: Array2<f64>) -> Result<FeatureMatrix> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                stage: "features".into(),
                message: "non-finite feature entry".into(),
            });
        }
        Ok(FeatureMatrix { rows })
    }

    pub fn from_embeddings(emb: &EmbeddingMatrix) -> Result<FeatureMatrix> {
        FeatureMatrix::new(emb.vectors.clone())
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Encoder plus discriminator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgiModel {
    /// Hidden layer: heads concatenated, ELU.
    pub layer1: GatLayer,
    /// Output layer: heads averaged, identity activation.
    pub layer2: GatLayer,
    /// Bilinear discriminator weight, `out_dim x out_dim`.
    pub disc_weight: Array2<f64>,
}

impl DgiModel {
    pub fn init(in_dim: usize, params: &DgiParams) -> Result<DgiModel> {
        params.validate()?;
        let mut rng = rng_from_seed(derive_seed(params.seed, "dgi_init"));
        let head_dim = params.hidden_dim / params.heads;
        let layer1 = GatLayer::init(
            in_dim,
            head_dim,
            params.heads,
            HeadMode::ConcatHeads,
            Activation::Elu,
            params.leaky_slope,
            &mut rng,
        );
        let layer2 = GatLayer::init(
            params.hidden_dim,
            params.out_dim,
            params.heads,
            HeadMode::AverageHeads,
            Activation::Identity,
            params.leaky_slope,
            &mut rng,
        );
        let limit = (6.0 / (2 * params.out_dim) as f64).sqrt();
        let disc_weight = Array2::from_shape_fn((params.out_dim, params.out_dim), |_| {
            rand::Rng::gen::<f64>(&mut rng) * 2.0 * limit - limit
        });
        Ok(DgiModel {
            layer1,
            layer2,
            disc_weight,
        })
    }

    /// Parameter tensors as mutable flat slices, in the canonical order
    /// shared with [`DgiGradients::slices`].
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let DgiModel {
            layer1,
            layer2,
            disc_weight,
        } = self;
        let mut out = Vec::new();
        for layer in [layer1, layer2] {
            for w in &mut layer.weights {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
            for a in &mut layer.attn_src {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
            for a in &mut layer.attn_dst {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(disc_weight.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn assert_finite(&self) -> Result<()> {
        let finite = self
            .layer1
            .weights
            .iter()
            .chain(&self.layer2.weights)
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self
                .layer1
                .attn_src
                .iter()
                .chain(&self.layer1.attn_dst)
                .chain(&self.layer2.attn_src)
                .chain(&self.layer2.attn_dst)
                .all(|a| a.iter().all(|v| v.is_finite()))
            && self.disc_weight.iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::numeric("dgi", "non-finite model parameter"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgiGradients {
    pub layer1: GatLayerGrads,
    pub layer2: GatLayerGrads,
    pub disc_weight: Array2<f64>,
}

impl DgiGradients {
    /// Flat views in the canonical parameter order.
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in [&self.layer1, &self.layer2] {
            for w in &layer.weights {
                out.push(w.as_slice().expect("standard layout"));
            }
            for a in &layer.attn_src {
                out.push(a.as_slice().expect("standard layout"));
            }
            for a in &layer.attn_dst {
                out.push(a.as_slice().expect("standard layout"));
            }
        }
        out.push(self.disc_weight.as_slice().expect("standard layout"));
        out
    }
}

/// Column-wise mean of the node embeddings: the graph summary.
pub fn readout_mean(h: &Array2<f64>) -> Result<Array1<f64>> {
    if h.nrows() == 0 {
        return Err(Error::InvalidParameter("readout of an empty matrix".into()));
    }
    Ok(h.mean_axis(ndarray::Axis(0)).expect("nonempty"))
}

/// A uniformly random permutation drawn from the seed.
pub fn corruption_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
    perm
}

/// Negative-sample construction: permutes the feature rows while the
/// adjacency stays fixed. The row multiset is preserved exactly.
pub fn corrupt_features(x: &FeatureMatrix, seed: u64) -> Result<FeatureMatrix> {
    if x.n_nodes() < 2 {
        return Err(Error::Dataset(
            "cannot corrupt: need at least 2 feature rows".into(),
        ));
    }
    let perm = corruption_permutation(x.n_nodes(), seed);
    Ok(FeatureMatrix {
        rows: permute_rows(&x.rows, &perm),
    })
}

fn permute_rows(x: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for (dst, &src) in perm.iter().enumerate() {
        out.row_mut(dst).assign(&x.row(src));
    }
    out
}

/// Bilinear discriminator probability `sigma(h^T W s)`.
pub fn discriminator(h: &[f64], s: &[f64], w: &Array2<f64>) -> f64 {
    let ws = w.dot(&Array1::from_vec(s.to_vec()));
    let logit: f64 = h.iter().zip(ws.iter()).map(|(a, b)| a * b).sum();
    sigmoid(logit)
}

/// Contrastive NLL over discriminator scores:
/// `-(1/(N+M)) * (sum log D_i + sum log(1 - D~_j))`, logs clamped at 1e-12.
pub fn dgi_loss(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::InvalidParameter(
            "dgi loss needs both positive and negative scores".into(),
        ));
    }
    let mut total = 0.0f64;
    for &d in pos_scores {
        total += ln_clamped(d);
    }
    for &d in neg_scores {
        total += ln_clamped(1.0 - d);
    }
    Ok(-total / (pos_scores.len() + neg_scores.len()) as f64)
}

struct BranchForward {
    h1: Array2<f64>,
    cache1: GatCache,
    h2: Array2<f64>,
    cache2: GatCache,
}

fn encode_branch(model: &DgiModel, x: &Array2<f64>, hoods: &Neighborhoods) -> Result<BranchForward> {
    let (h1, cache1) = gat_forward_cached(&model.layer1, x, hoods)?;
    let (h2, cache2) = gat_forward_cached(&model.layer2, &h1, hoods)?;
    Ok(BranchForward {
        h1,
        cache1,
        h2,
        cache2,
    })
}

/// Encoder output on the uncorrupted input (the refined embeddings).
pub fn encode(model: &DgiModel, x: &FeatureMatrix, g: &HeteroGraph) -> Result<Array2<f64>> {
    let hoods = Neighborhoods::build(g);
    Ok(encode_branch(model, &x.rows, &hoods)?.h2)
}

/// Loss for a fixed corruption permutation. Used directly by the
/// finite-difference oracle in the tests.
pub fn dgi_loss_at(
    model: &DgiModel,
    x: &FeatureMatrix,
    g: &HeteroGraph,
    perm: &[usize],
) -> Result<f64> {
    let hoods = Neighborhoods::build(g);
    let pos = encode_branch(model, &x.rows, &hoods)?;
    let s = readout_mean(&pos.h2)?;
    let x_neg = permute_rows(&x.rows, perm);
    let neg = encode_branch(model, &x_neg, &hoods)?;
    let t = model.disc_weight.dot(&s);
    let pos_scores: Vec<f64> = pos.h2.rows().into_iter().map(|h| sigmoid(h.dot(&t))).collect();
    let neg_scores: Vec<f64> = neg.h2.rows().into_iter().map(|h| sigmoid(h.dot(&t))).collect();
    dgi_loss(&pos_scores, &neg_scores)
}

/// Loss and analytic gradients of every parameter for a fixed corruption.
///
/// The summary `s` is the mean of the positive branch, so 1/N of its
/// gradient flows back into every positive node embedding.
pub fn dgi_loss_and_grads(
    model: &DgiModel,
    x: &FeatureMatrix,
    g: &HeteroGraph,
    perm: &[usize],
) -> Result<(f64, DgiGradients)> {
    let hoods = Neighborhoods::build(g);
    let pos = encode_branch(model, &x.rows, &hoods)?;
    let s = readout_mean(&pos.h2)?;
    let x_neg = permute_rows(&x.rows, perm);
    let neg = encode_branch(model, &x_neg, &hoods)?;

    let n = pos.h2.nrows();
    let m = neg.h2.nrows();
    let inv = 1.0 / (n + m) as f64;
    let t = model.disc_weight.dot(&s); // W s

    let pos_logits = pos.h2.dot(&t);
    let neg_logits = neg.h2.dot(&t);
    let pos_scores: Vec<f64> = pos_logits.iter().map(|&u| sigmoid(u)).collect();
    let neg_scores: Vec<f64> = neg_logits.iter().map(|&u| sigmoid(u)).collect();
    let loss = dgi_loss(&pos_scores, &neg_scores)?;

    // dL/d(logit): positives -(1 - D_i)/(N+M), negatives D~_j/(N+M)
    let a = Array1::from_iter(pos_scores.iter().map(|&d| -(1.0 - d) * inv));
    let b = Array1::from_iter(neg_scores.iter().map(|&d| d * inv));

    // c = H_pos^T a + H_neg^T b; dW = c s^T; ds = W^T c
    let c = pos.h2.t().dot(&a) + neg.h2.t().dot(&b);
    let d_disc = outer(&c, &s);
    let ds = model.disc_weight.t().dot(&c);

    // dH_pos = a t^T + (1/N) 1 ds^T ; dH_neg = b t^T
    let mut d_hpos = outer(&a, &t);
    let ds_scaled = ds.mapv(|v| v / n as f64);
    for mut row in d_hpos.rows_mut() {
        row += &ds_scaled;
    }
    let d_hneg = outer(&b, &t);

    let (grads2_pos, dh1_pos) =
        gat_backward(&model.layer2, &pos.h1, &hoods, &pos.cache2, &d_hpos, true);
    let (grads1_pos, _) = gat_backward(
        &model.layer1,
        &x.rows,
        &hoods,
        &pos.cache1,
        &dh1_pos.expect("requested"),
        false,
    );
    let (grads2_neg, dh1_neg) =
        gat_backward(&model.layer2, &neg.h1, &hoods, &neg.cache2, &d_hneg, true);
    let (grads1_neg, _) = gat_backward(
        &model.layer1,
        &x_neg,
        &hoods,
        &neg.cache1,
        &dh1_neg.expect("requested"),
        false,
    );

    let mut layer1 = grads1_pos;
    layer1.add_assign(&grads1_neg);
    let mut layer2 = grads2_pos;
    layer2.add_assign(&grads2_neg);

    Ok((
        loss,
        DgiGradients {
            layer1,
            layer2,
            disc_weight: d_disc,
        },
    ))
}

/// Gradients with the corruption fixed by `seed` (one permutation draw),
/// making the loss a deterministic function of the parameters.
pub fn dgi_backward(
    model: &DgiModel,
    x: &FeatureMatrix,
    g: &HeteroGraph,
    seed: u64,
) -> Result<(f64, DgiGradients)> {
    let perm = corruption_permutation(x.n_nodes(), seed);
    dgi_loss_and_grads(model, x, g, &perm)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(shapes: &[usize]) -> AdamState {
        AdamState {
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..param.len() {
                let g = grad[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                param[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DgiStats {
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

const EARLY_STOP_DELTA: f64 = 1e-5;

/// Full-batch contrastive training.
///
/// Each epoch draws one fresh corruption permutation, scores positives and
/// negatives against the positive branch's summary, and takes one Adam step.
/// Returns the layer-2 embeddings of the uncorrupted input plus the trained
/// model and per-epoch losses.
pub fn train_dgi(
    g: &HeteroGraph,
    x: &FeatureMatrix,
    params: &DgiParams,
) -> Result<(EmbeddingMatrix, DgiModel, DgiStats)> {
    params.validate()?;
    if x.n_nodes() != g.node_count() {
        return Err(Error::InvalidParameter(format!(
            "feature rows {} != node count {}",
            x.n_nodes(),
            g.node_count()
        )));
    }
    if x.n_nodes() < 2 {
        return Err(Error::Dataset("need at least 2 nodes to train".into()));
    }

    let mut model = DgiModel::init(x.dim(), params)?;
    let shapes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(&shapes);

    let mut epoch_losses = Vec::with_capacity(params.epochs);
    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for epoch in 0..params.epochs {
        let corrupt_seed = derive_seed_indexed(params.seed, "dgi_corrupt", &[epoch as u64]);
        let perm = corruption_permutation(x.n_nodes(), corrupt_seed);
        let (loss, grads) = dgi_loss_and_grads(&model, x, g, &perm)?;
        if !loss.is_finite() {
            return Err(Error::numeric(
                "dgi",
                format!("non-finite loss {loss} at epoch {epoch}"),
            ));
        }
        epoch_losses.push(loss);

        {
            let grad_slices = grads.slices();
            let mut param_slices = model.param_slices_mut();
            adam.step(&mut param_slices, &grad_slices, params.lr);
        }
        model.assert_finite()?;

        if loss < best_loss - EARLY_STOP_DELTA {
            best_loss = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let h2 = encode(&model, x, g)?;
    let embeddings = EmbeddingMatrix {
        vectors: h2,
        context_vectors: None,
        node_keys: g.nodes().to_vec(),
    };
    embeddings.assert_finite("dgi")?;
    Ok((
        embeddings,
        model,
        DgiStats {
            epoch_losses,
            stopped_early,
        },
    ))
}

/// JSON checkpoint: all matrices (with shapes) plus the parameters used.
#[derive(Debug, Serialize, Deserialize)]
pub struct DgiCheckpoint {
    pub params: DgiParams,
    pub model: DgiModel,
}

pub fn write_checkpoint(
    model: &DgiModel,
    params: &DgiParams,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string(&DgiCheckpoint {
        params: params.clone(),
        model: model.clone(),
    })
    .map_err(|e| Error::Config(format!("serializing checkpoint: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<std::path::Path>) -> Result<DgiCheckpoint> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))
}
