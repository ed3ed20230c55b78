//! Skip-gram with negative sampling over the walk corpus.
//!
//! Minimizes, per (center, context) pair with `n` sampled negatives,
//!
//! ```text
//! L = -log sigma(Vc . Vctx) - sum_k log sigma(-Vc . Vneg_k)
//! ```
//!
//! by plain SGD with a linearly decayed learning rate. Two tables are kept
//! (input and context vectors); the input table is the returned embedding.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeIndex, NodeKey};
use crate::seed::{derive_seed, rng_from_seed};
use crate::walks::WalkCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSamplingMode {
    Uniform,
    Unigram,
    /// Unigram raised to the 3/4 power, the standard choice.
    UnigramPow075,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramParams {
    /// Embedding dimension.
    pub dim: usize,
    /// Context window half-width `k`: pairs are formed for offsets
    /// `|j| <= k`, `j != 0`, truncated at sequence edges.
    pub window: usize,
    /// Negative samples per (center, context) pair.
    pub negatives: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    #[serde(default = "default_negative_mode")]
    pub negative_mode: NegativeSamplingMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_negative_mode() -> NegativeSamplingMode {
    NegativeSamplingMode::UnigramPow075
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            dim: 128,
            window: 10,
            negatives: 5,
            epochs: 2,
            lr_initial: 0.025,
            negative_mode: default_negative_mode(),
            seed: 0,
        }
    }
}

impl SkipGramParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidParameter("embedding dim must be >= 1".into()));
        }
        if self.window < 1 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::InvalidParameter("negatives must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return Err(Error::InvalidParameter("lr_initial must be positive".into()));
        }
        Ok(())
    }
}

/// Dense node embeddings plus the node keys aligned to rows.
///
/// `context_vectors` is the second skip-gram table; embeddings produced by
/// other stages carry `None` there.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub vectors: Array2<f64>,
    pub context_vectors: Option<Array2<f64>>,
    pub node_keys: Vec<NodeKey>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, ix: usize) -> &[f64] {
        self.vectors.row(ix).to_slice().expect("row-major layout")
    }

    pub fn key_row(&self, key: &NodeKey) -> Option<&[f64]> {
        self.node_keys
            .iter()
            .position(|k| k == key)
            .map(|ix| self.row(ix))
    }

    pub fn assert_finite(&self, stage: &str) -> Result<()> {
        if self.vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(stage, "non-finite embedding entry"));
        }
        Ok(())
    }
}

/// Negative-sampling distribution over nodes that occur in the corpus.
#[derive(Debug)]
pub struct NegativeTable {
    probs: Vec<f64>,
    support: Vec<u32>,
    alias: AliasTable,
}

impl NegativeTable {
    pub fn probability(&self, node: NodeIndex) -> f64 {
        self.probs[node.index()]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> NodeIndex {
        NodeIndex(self.support[self.alias.sample(rng)])
    }
}

/// Builds the negative table from corpus occurrence counts. Support is the
/// set of nodes with nonzero frequency; everything else has probability 0.
pub fn build_negative_table(
    corpus: &WalkCorpus,
    n_nodes: usize,
    mode: NegativeSamplingMode,
) -> Result<NegativeTable> {
    if corpus.walks.is_empty() {
        return Err(Error::Dataset("empty walk corpus".into()));
    }
    let mut freq = vec![0u64; n_nodes];
    for walk in &corpus.walks {
        for &node in walk {
            if node.index() >= n_nodes {
                return Err(Error::Dataset(format!(
                    "corpus references node index {} >= node count {n_nodes}",
                    node.0
                )));
            }
            freq[node.index()] += 1;
        }
    }
    let weight = |f: u64| -> f64 {
        match mode {
            NegativeSamplingMode::Uniform => 1.0,
            NegativeSamplingMode::Unigram => f as f64,
            NegativeSamplingMode::UnigramPow075 => (f as f64).powf(0.75),
        }
    };
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (ix, &f) in freq.iter().enumerate() {
        if f > 0 {
            support.push(ix as u32);
            weights.push(weight(f));
        }
    }
    let total: f64 = weights.iter().sum();
    let mut probs = vec![0.0f64; n_nodes];
    for (&ix, &w) in support.iter().zip(&weights) {
        probs[ix as usize] = w / total;
    }
    let alias = AliasTable::new(&weights)?;
    Ok(NegativeTable { probs, support, alias })
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn ln_clamped(x: f64) -> f64 {
    x.max(1e-12).ln()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<()> {
    let d = center.len();
    if context.len() != d || negatives.iter().any(|n| n.len() != d) {
        return Err(Error::InvalidParameter(
            "dimension mismatch between center, context and negative vectors".into(),
        ));
    }
    Ok(())
}

/// Loss of a single (center, context, negatives) term.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<f64> {
    check_dims(center, context, negatives)?;
    let mut loss = -ln_clamped(sigmoid(dot(center, context)));
    for neg in negatives {
        loss -= ln_clamped(sigmoid(-dot(center, neg)));
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct PairGradients {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradients of [`pair_loss`] with respect to every input vector:
/// `dL/dVc = (sigma(c.x) - 1) x + sum_k sigma(c.n_k) n_k`, and the symmetric
/// forms for the context and negative vectors.
pub fn pair_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<PairGradients> {
    check_dims(center, context, negatives)?;
    let d = center.len();
    let g_pos = sigmoid(dot(center, context)) - 1.0;
    let mut grad_center: Vec<f64> = context.iter().map(|v| g_pos * v).collect();
    let grad_context: Vec<f64> = center.iter().map(|v| g_pos * v).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let g_neg = sigmoid(dot(center, neg));
        for k in 0..d {
            grad_center[k] += g_neg * neg[k];
        }
        grad_negatives.push(center.iter().map(|v| g_neg * v).collect());
    }
    Ok(PairGradients {
        center: grad_center,
        context: grad_context,
        negatives: grad_negatives,
    })
}

#[derive(Debug, Clone)]
pub struct SkipGramStats {
    /// Mean pair loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub total_pairs: u64,
}

/// Trains skip-gram embeddings over the corpus.
///
/// Single-threaded and deterministic for a fixed seed: iterates the corpus
/// in order, draws `negatives` samples per pair, applies one SGD step per
/// pair with the learning rate decayed linearly from `lr_initial` to
/// `lr_initial * 1e-4` over all `epochs * pairs` updates.
pub fn train_skipgram(
    corpus: &WalkCorpus,
    g: &HeteroGraph,
    params: &SkipGramParams,
) -> Result<(EmbeddingMatrix, SkipGramStats)> {
    params.validate()?;
    if corpus.walks.is_empty() {
        return Err(Error::Dataset("empty walk corpus".into()));
    }
    let n = g.node_count();
    let d = params.dim;
    let table = build_negative_table(corpus, n, params.negative_mode)?;

    // word2vec-style init: input uniform in [-0.5/d, 0.5/d), context zero.
    let mut init_rng = rng_from_seed(derive_seed(params.seed, "skipgram_init"));
    let mut input: Vec<f64> = (0..n * d)
        .map(|_| (rand::Rng::gen::<f64>(&mut init_rng) - 0.5) / d as f64)
        .collect();
    let mut context: Vec<f64> = vec![0.0; n * d];

    let pairs_per_epoch: u64 = corpus
        .walks
        .iter()
        .map(|walk| {
            let len = walk.len();
            (0..len)
                .map(|t| {
                    let lo = t.saturating_sub(params.window);
                    let hi = (t + params.window).min(len - 1);
                    (hi - lo) as u64
                })
                .sum::<u64>()
        })
        .sum();
    let total_pairs = pairs_per_epoch * params.epochs as u64;
    if total_pairs == 0 {
        return Err(Error::Dataset("corpus yields no training pairs".into()));
    }

    let mut rng = rng_from_seed(derive_seed(params.seed, "skipgram_train"));
    let lr_floor = params.lr_initial * 1e-4;
    let mut seen: u64 = 0;
    let mut grad_center = vec![0.0f64; d];
    let mut epoch_losses = Vec::with_capacity(params.epochs);

    for _epoch in 0..params.epochs {
        let mut epoch_loss = 0.0f64;
        for walk in &corpus.walks {
            for t in 0..walk.len() {
                let center_ix = walk[t].index();
                let lo = t.saturating_sub(params.window);
                let hi = (t + params.window).min(walk.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == t {
                        continue;
                    }
                    let ctx_ix = walk[ctx_pos].index();
                    let lr = (params.lr_initial
                        * (1.0 - seen as f64 / total_pairs as f64))
                        .max(lr_floor);
                    seen += 1;

                    // One fused SGD step; all gradients are evaluated at the
                    // pre-update parameters, matching `pair_gradients`.
                    grad_center.iter_mut().for_each(|v| *v = 0.0);
                    let (c0, c1) = (center_ix * d, center_ix * d + d);
                    let (x0, x1) = (ctx_ix * d, ctx_ix * d + d);

                    let s = dot(&input[c0..c1], &context[x0..x1]);
                    let g_pos = sigmoid(s) - 1.0;
                    epoch_loss -= ln_clamped(sigmoid(s));
                    for k in 0..d {
                        grad_center[k] += g_pos * context[x0 + k];
                    }
                    for k in 0..d {
                        context[x0 + k] -= lr * g_pos * input[c0 + k];
                    }
                    for _ in 0..params.negatives {
                        let neg_ix = table.draw(&mut rng).index();
                        let (n0, n1) = (neg_ix * d, neg_ix * d + d);
                        let sn = dot(&input[c0..c1], &context[n0..n1]);
                        let g_neg = sigmoid(sn);
                        epoch_loss -= ln_clamped(sigmoid(-sn));
                        for k in 0..d {
                            grad_center[k] += g_neg * context[n0 + k];
                        }
                        for k in 0..d {
                            context[n0 + k] -= lr * g_neg * input[c0 + k];
                        }
                    }
                    for k in 0..d {
                        input[c0 + k] -= lr * grad_center[k];
                    }
                }
            }
        }
        epoch_losses.push(epoch_loss / pairs_per_epoch as f64);
    }

    let vectors = Array2::from_shape_vec((n, d), input)
        .map_err(|e| Error::numeric("skipgram", e.to_string()))?;
    let context_vectors = Array2::from_shape_vec((n, d), context)
        .map_err(|e| Error::numeric("skipgram", e.to_string()))?;
    let embeddings = EmbeddingMatrix {
        vectors,
        context_vectors: Some(context_vectors),
        node_keys: g.nodes().to_vec(),
    };
    embeddings.assert_finite("skipgram")?;
    Ok((
        embeddings,
        SkipGramStats {
            epoch_losses,
            total_pairs,
        },
    ))
}

/// Writes the embedding TSV: header `node_key  v0 ... v{d-1}`, one row per
/// node, 9 significant digits.
pub fn write_embedding_tsv(emb: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let d = emb.dim();
    let mut header = String::from("node_key");
    for k in 0..d {
        header.push_str(&format!("\tv{k}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for (ix, key) in emb.node_keys.iter().enumerate() {
        let mut line = key.to_string();
        for v in emb.row(ix) {
            line.push_str(&format!("\t{v:.8e}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an embedding TSV produced by [`write_embedding_tsv`].
pub fn read_embedding_tsv(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let d = header.split('\t').count().saturating_sub(1);
    if d == 0 || !header.starts_with("node_key") {
        return Err(Error::parse(path, 1, "malformed embedding header"));
    }
    let mut keys = Vec::new();
    let mut data = Vec::new();
    for (ix, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let key = NodeKey::parse(cols.next().unwrap())
            .map_err(|e| Error::parse(path, ix + 1, e.to_string()))?;
        let values: Vec<f64> = cols
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::parse(path, ix + 1, format!("bad float `{c}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != d {
            return Err(Error::parse(
                path,
                ix + 1,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        keys.push(key);
        data.extend(values);
    }
    if keys.is_empty() {
        return Err(Error::Dataset(format!("no embeddings in {}", path.display())));
    }
    let vectors = Array2::from_shape_vec((keys.len(), d), data)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(EmbeddingMatrix {
        vectors,
        context_vectors: None,
        node_keys: keys,
    })
}
