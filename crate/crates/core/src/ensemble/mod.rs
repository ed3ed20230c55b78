//! Balanced-subset stacking.
//!
//! Training negatives are partitioned into disjoint slices the size of the
//! positive class; each slice plus all positives forms a balanced subset
//! training one random forest. A logistic meta-learner is then fitted on the
//! forests' probabilities over a reserved stratified meta-fold, so the
//! meta-learner never sees rows any base forest trained on.

mod tree;

pub use tree::{train_forest, train_tree, DecisionTree, ForestParams, RandomForest, TreeNode};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::round_half_up;
use crate::pairs::PairDataset;
use crate::seed::{derive_seed, derive_seed_indexed, rng_from_seed};
use crate::skipgram::{ln_clamped, sigmoid};

/// One balanced training subset: every training positive plus an equally
/// sized, disjoint slice of negatives. Values are row indices into the
/// training dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSubset {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Shuffles the negatives and cuts `B = floor(|neg| / |pos|)` disjoint
/// slices of exactly `|pos|` each; the `|neg| mod |pos|` leftovers are
/// discarded and their count returned.
pub fn partition_balanced(
    pos: &[usize],
    neg: &[usize],
    seed: u64,
) -> Result<(Vec<BalancedSubset>, usize)> {
    if pos.is_empty() {
        return Err(Error::Dataset("cannot balance: no positives".into()));
    }
    if neg.len() < pos.len() {
        return Err(Error::Dataset(format!(
            "cannot balance: {} negatives < {} positives",
            neg.len(),
            pos.len()
        )));
    }
    let mut shuffled = neg.to_vec();
    let mut rng = rng_from_seed(seed);
    shuffled.shuffle(&mut rng);
    let b = neg.len() / pos.len();
    let subsets = (0..b)
        .map(|k| BalancedSubset {
            positives: pos.to_vec(),
            negatives: shuffled[k * pos.len()..(k + 1) * pos.len()].to_vec(),
        })
        .collect();
    Ok((subsets, neg.len() % pos.len()))
}

const META_L2: f64 = 1e-4;
const META_TOL: f64 = 1e-8;
const META_MAX_ITERS: usize = 1000;

/// Mean logistic NLL with L2 penalty on the weights (not the intercept),
/// plus its gradient. `w` has layout `[w_0 .. w_{B-1}, intercept]`.
fn logistic_objective(w: &[f64], x: ArrayView2<'_, f64>, y: &[u8]) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let b = x.ncols();
    let mut loss = 0.0;
    let mut grad = vec![0.0f64; b + 1];
    for i in 0..n {
        let row = x.row(i);
        let z: f64 = row
            .iter()
            .zip(&w[..b])
            .map(|(xi, wi)| xi * wi)
            .sum::<f64>()
            + w[b];
        let p = sigmoid(z);
        let yi = y[i] as f64;
        loss -= yi * ln_clamped(p) + (1.0 - yi) * ln_clamped(1.0 - p);
        let err = p - yi;
        for (g, xi) in grad[..b].iter_mut().zip(row.iter()) {
            *g += err * xi;
        }
        grad[b] += err;
    }
    loss /= n as f64;
    for g in grad.iter_mut() {
        *g /= n as f64;
    }
    for k in 0..b {
        loss += META_L2 * w[k] * w[k];
        grad[k] += 2.0 * META_L2 * w[k];
    }
    (loss, grad)
}

/// Fits the logistic meta-learner by full-batch gradient descent with
/// backtracking, until the gradient infinity-norm drops below 1e-8 or 1000
/// iterations. Deterministic. Returns `B` weights plus the intercept.
pub fn train_meta(base_predictions: ArrayView2<'_, f64>, labels: &[u8]) -> Result<Vec<f64>> {
    let n = base_predictions.nrows();
    if n != labels.len() || n < 2 {
        return Err(Error::Dataset(
            "meta-learner needs >= 2 rows with matching labels".into(),
        ));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::Dataset(
            "meta-learner training labels are single-class".into(),
        ));
    }

    let b = base_predictions.ncols();
    let mut w = vec![0.0f64; b + 1];
    let (mut loss, mut grad) = logistic_objective(&w, base_predictions, labels);
    for _ in 0..META_MAX_ITERS {
        let g_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if g_inf < META_TOL {
            break;
        }
        let g_sq: f64 = grad.iter().map(|g| g * g).sum();
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            let (trial_loss, trial_grad) = logistic_objective(&trial, base_predictions, labels);
            if trial_loss <= loss - 0.5 * step * g_sq {
                w = trial;
                loss = trial_loss;
                grad = trial_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // step collapsed below float resolution
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    #[serde(default)]
    pub forest: ForestParams,
    /// Fraction of the training set reserved (stratified) for the
    /// meta-learner.
    pub meta_fraction: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            forest: ForestParams::default(),
            meta_fraction: 0.2,
        }
    }
}

/// Provenance of a stacking fit: which training rows fed the meta-learner,
/// which fed each balanced subset, and how many negatives were discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub meta_indices: Vec<usize>,
    pub subsets: Vec<BalancedSubset>,
    pub discarded_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedEnsemble {
    pub forests: Vec<RandomForest>,
    /// `B` forest weights followed by the intercept.
    pub meta_weights: Vec<f64>,
    pub feature_dim: usize,
    pub fit_info: FitInfo,
}

impl StackedEnsemble {
    pub fn base_count(&self) -> usize {
        self.forests.len()
    }
}

/// Final prediction `sigma(w . p + b)` over the forests' probabilities.
pub fn predict_stacked(model: &StackedEnsemble, features: &[f64]) -> Result<f64> {
    if features.len() != model.feature_dim {
        return Err(Error::InvalidParameter(format!(
            "feature dimension mismatch: model expects {}, got {}",
            model.feature_dim,
            features.len()
        )));
    }
    let b = model.forests.len();
    let mut z = model.meta_weights[b];
    for (forest, w) in model.forests.iter().zip(&model.meta_weights[..b]) {
        z += w * forest.predict_proba(features);
    }
    Ok(sigmoid(z))
}

/// Fits the full stacked ensemble on a labeled pair dataset.
pub fn fit_stacked(
    train: &PairDataset,
    params: &EnsembleParams,
    seed: u64,
) -> Result<StackedEnsemble> {
    if !(params.meta_fraction > 0.0 && params.meta_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "meta_fraction must lie in (0,1), got {}",
            params.meta_fraction
        )));
    }
    let n = train.samples.len();
    let d = train.feature_dim();
    if n == 0 || d == 0 {
        return Err(Error::Dataset("empty training dataset".into()));
    }
    let mut flat = Vec::with_capacity(n * d);
    for s in &train.samples {
        if s.features.len() != d {
            return Err(Error::Dataset("inconsistent feature width".into()));
        }
        flat.extend_from_slice(&s.features);
    }
    let data = Array2::from_shape_vec((n, d), flat).expect("shape checked");
    let labels: Vec<u8> = train.samples.iter().map(|s| s.label).collect();

    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Dataset("training data must contain both classes".into()));
    }

    // stratified meta-fold
    let base_ratio = 1.0 - params.meta_fraction;
    let mut split_rng = rng_from_seed(derive_seed(seed, "meta_split"));
    let mut cut = |ixs: &[usize]| -> (Vec<usize>, Vec<usize>) {
        let mut shuffled = ixs.to_vec();
        shuffled.shuffle(&mut split_rng);
        let k = round_half_up(base_ratio * shuffled.len() as f64);
        let meta = shuffled.split_off(k.min(shuffled.len()));
        (shuffled, meta)
    };
    let (base_pos, meta_pos) = cut(&pos);
    let (base_neg, meta_neg) = cut(&neg);
    if meta_pos.is_empty() || meta_neg.is_empty() {
        return Err(Error::Dataset(
            "meta-fold would be single-class; enlarge the dataset or meta_fraction".into(),
        ));
    }
    if base_pos.is_empty() {
        return Err(Error::Dataset("base fold has no positives".into()));
    }

    let (subsets, discarded) =
        partition_balanced(&base_pos, &base_neg, derive_seed(seed, "partition"))?;
    if subsets.is_empty() {
        return Err(Error::Dataset("no balanced subsets could be formed".into()));
    }

    let mut forests = Vec::with_capacity(subsets.len());
    for (b_ix, subset) in subsets.iter().enumerate() {
        let mut idx = subset.positives.clone();
        idx.extend_from_slice(&subset.negatives);
        let forest_seed = derive_seed_indexed(seed, "forest", &[b_ix as u64]);
        forests.push(train_forest(
            data.view(),
            &labels,
            &idx,
            &params.forest,
            forest_seed,
        ));
    }

    let mut meta_indices = meta_pos;
    meta_indices.extend(meta_neg);
    meta_indices.sort_unstable();
    let mut meta_x = Array2::zeros((meta_indices.len(), forests.len()));
    for (row, &i) in meta_indices.iter().enumerate() {
        let features = data.row(i);
        let features = features.to_slice().expect("row-major");
        for (col, forest) in forests.iter().enumerate() {
            meta_x[[row, col]] = forest.predict_proba(features);
        }
    }
    let meta_y: Vec<u8> = meta_indices.iter().map(|&i| labels[i]).collect();
    let meta_weights = train_meta(meta_x.view(), &meta_y)?;

    Ok(StackedEnsemble {
        forests,
        meta_weights,
        feature_dim: d,
        fit_info: FitInfo {
            meta_indices,
            subsets,
            discarded_negatives: discarded,
        },
    })
}

/// Versioned JSON container for a trained ensemble plus the configuration
/// that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub ensemble: StackedEnsemble,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn write_model(
    model: &StackedEnsemble,
    config: serde_json::Value,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        config,
        ensemble: model.clone(),
    };
    let body = serde_json::to_string(&file)
        .map_err(|e| Error::Config(format!("serializing model: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<std::path::Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&body)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    Ok(file)
}
