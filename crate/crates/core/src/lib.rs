//! Link prediction on heterogeneous herb-ingredient-target-disease (HITD)
//! association networks.
//!
//! The crate implements the full prediction pipeline:
//!
//! 1. [`graph`] — typed heterogeneous graph, TSV ingestion, edge hiding and
//!    a planted-community synthetic benchmark generator.
//! 2. [`walks`] — second-order biased random walks (return parameter `p`,
//!    in-out parameter `q`) with alias-method sampling.
//! 3. [`skipgram`] — skip-gram with negative sampling over the walk corpus,
//!    producing the initial node embeddings.
//! 4. [`dgi`] — contrastive refinement: a two-layer graph-attention encoder
//!    trained to tell true (node, graph-summary) pairs from corrupted ones.
//! 5. [`pairs`] — labeled ingredient-disease pair datasets with Hadamard
//!    features, and the stratified train/test split.
//! 6. [`ensemble`] — balanced-subset stacking: one random forest per
//!    balanced subset, fused by a logistic meta-learner.
//! 7. [`metrics`] — AUC, average precision and thresholded reports.
//! 8. [`pipeline`] — configuration, orchestration, and the robustness /
//!    tuning / ranking harnesses.

pub mod alias;
pub mod dgi;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod pairs;
// pub mod pipeline;
pub mod seed;
pub mod skipgram;
pub mod walks;

pub use dgi::{DgiModel, DgiParams, FeatureMatrix};
pub use ensemble::{BalancedSubset, DecisionTree, EnsembleParams, RandomForest, StackedEnsemble};
pub use error::{Error, ErrorKind, Result};
pub use graph::{EdgeSplit, HeteroGraph, NodeIndex, NodeKey, NodeType, RelationType, SyntheticParams};
pub use metrics::{MetricsReport, ScoredLabels};
pub use pairs::{PairDataset, PairSample};
// pub use pipeline::{AblationMode, ExperimentRecord, PipelineConfig};
pub use skipgram::{EmbeddingMatrix, SkipGramParams};
pub use walks::{WalkCorpus, WalkParams};
