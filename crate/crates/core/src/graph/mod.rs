//! Heterogeneous graph representation: typed nodes, deduplicated undirected
//! edges with relation labels, file ingestion, edge hiding and the synthetic
//! benchmark generator.

mod io;
mod synthetic;

pub use io::{load_edge_list, read_split_manifest, write_edge_list, write_split_manifest};
pub use synthetic::{generate_synthetic_hitd, SyntheticGraph, SyntheticParams};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// The four entity types of the association network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Herb,
    Ingredient,
    Target,
    Disease,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Herb,
        NodeType::Ingredient,
        NodeType::Target,
        NodeType::Disease,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Herb => "herb",
            NodeType::Ingredient => "ingredient",
            NodeType::Target => "target",
            NodeType::Disease => "disease",
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        match s {
            "herb" => Some(NodeType::Herb),
            "ingredient" => Some(NodeType::Ingredient),
            "target" => Some(NodeType::Target),
            "disease" => Some(NodeType::Disease),
            _ => None,
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The seven association kinds of the network. Each relation admits exactly
/// one unordered node-type pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    HerbIngredient,
    HerbTarget,
    HerbDisease,
    IngredientTarget,
    IngredientDisease,
    DiseaseTarget,
    TargetTarget,
}

impl RelationType {
    pub const ALL: [RelationType; 7] = [
        RelationType::HerbIngredient,
        RelationType::HerbTarget,
        RelationType::HerbDisease,
        RelationType::IngredientTarget,
        RelationType::IngredientDisease,
        RelationType::DiseaseTarget,
        RelationType::TargetTarget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::HerbIngredient => "herb_ingredient",
            RelationType::HerbTarget => "herb_target",
            RelationType::HerbDisease => "herb_disease",
            RelationType::IngredientTarget => "ingredient_target",
            RelationType::IngredientDisease => "ingredient_disease",
            RelationType::DiseaseTarget => "disease_target",
            RelationType::TargetTarget => "target_target",
        }
    }

    pub fn parse(s: &str) -> Option<RelationType> {
        RelationType::ALL.iter().copied().find(|r| r.as_str() == s)
    }

    /// The unordered node-type pair this relation joins.
    pub fn endpoints(self) -> (NodeType, NodeType) {
        match self {
            RelationType::HerbIngredient => (NodeType::Herb, NodeType::Ingredient),
            RelationType::HerbTarget => (NodeType::Herb, NodeType::Target),
            RelationType::HerbDisease => (NodeType::Herb, NodeType::Disease),
            RelationType::IngredientTarget => (NodeType::Ingredient, NodeType::Target),
            RelationType::IngredientDisease => (NodeType::Ingredient, NodeType::Disease),
            RelationType::DiseaseTarget => (NodeType::Disease, NodeType::Target),
            RelationType::TargetTarget => (NodeType::Target, NodeType::Target),
        }
    }

    /// Whether an edge of this relation may join nodes of types `a` and `b`
    /// (in either order).
    pub fn admits(self, a: NodeType, b: NodeType) -> bool {
        let (x, y) = self.endpoints();
        (a, b) == (x, y) || (a, b) == (y, x)
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Globally unique node identity: `(type, raw source id)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub node_type: NodeType,
    pub raw_id: String,
}

impl NodeKey {
    /// Builds a key, rejecting empty ids and ids containing tabs or newlines
    /// (they would corrupt the TSV formats).
    pub fn new(node_type: NodeType, raw_id: impl Into<String>) -> Result<NodeKey> {
        let raw_id = raw_id.into();
        if raw_id.is_empty() {
            return Err(Error::Graph("node id must be non-empty".into()));
        }
        if raw_id.contains(['\t', '\n', '\r']) {
            return Err(Error::Graph(format!(
                "node id {raw_id:?} contains tab or newline characters"
            )));
        }
        Ok(NodeKey { node_type, raw_id })
    }

    /// Parses the `type:raw_id` display form.
    pub fn parse(s: &str) -> Result<NodeKey> {
        let (t, id) = s
            .split_once(':')
            .ok_or_else(|| Error::Graph(format!("node key `{s}` is not of the form type:id")))?;
        let node_type = NodeType::parse(t)
            .ok_or_else(|| Error::Graph(format!("unknown node type `{t}` in key `{s}`")))?;
        NodeKey::new(node_type, id)
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node_type, self.raw_id)
    }
}

/// Dense node index into a [`HeteroGraph`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct NodeIndex(pub u32);

impl NodeIndex {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected heterogeneous graph. Immutable after construction.
///
/// Edges are stored as `(u, v, relation)` triples with `u < v`; the adjacency
/// lists are relation-agnostic, deduplicated and sorted.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    nodes: Vec<NodeKey>,
    index: HashMap<NodeKey, NodeIndex>,
    edges: BTreeSet<(NodeIndex, NodeIndex, RelationType)>,
    adjacency: Vec<Vec<NodeIndex>>,
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, ix: NodeIndex) -> &NodeKey {
        &self.nodes[ix.index()]
    }

    pub fn nodes(&self) -> &[NodeKey] {
        &self.nodes
    }

    pub fn node_index(&self, key: &NodeKey) -> Option<NodeIndex> {
        self.index.get(key).copied()
    }

    pub fn node_type(&self, ix: NodeIndex) -> NodeType {
        self.nodes[ix.index()].node_type
    }

    /// Sorted, deduplicated neighbor list (across all relations).
    pub fn neighbors(&self, ix: NodeIndex) -> &[NodeIndex] {
        &self.adjacency[ix.index()]
    }

    pub fn degree(&self, ix: NodeIndex) -> usize {
        self.adjacency[ix.index()].len()
    }

    pub fn is_adjacent(&self, u: NodeIndex, v: NodeIndex) -> bool {
        self.adjacency[u.index()].binary_search(&v).is_ok()
    }

    /// Edge triples in canonical `(u, v, relation)` order with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeIndex, NodeIndex, RelationType)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: NodeIndex, v: NodeIndex, rel: RelationType) -> bool {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.edges.contains(&(a, b, rel))
    }

    /// All edges of one relation, as canonical `(u, v)` pairs.
    pub fn edges_with_relation(&self, rel: RelationType) -> Vec<(NodeIndex, NodeIndex)> {
        self.edges
            .iter()
            .filter(|(_, _, r)| *r == rel)
            .map(|(u, v, _)| (*u, *v))
            .collect()
    }

    pub fn node_indices_of_type(&self, t: NodeType) -> Vec<NodeIndex> {
        (0..self.nodes.len() as u32)
            .map(NodeIndex)
            .filter(|ix| self.node_type(*ix) == t)
            .collect()
    }

    pub fn isolated_node_count(&self) -> usize {
        self.adjacency.iter().filter(|a| a.is_empty()).count()
    }
}

/// Incremental constructor enforcing the graph invariants.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeKey>,
    index: HashMap<NodeKey, NodeIndex>,
    edges: BTreeSet<(NodeIndex, NodeIndex, RelationType)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a node, returning its dense index (first-appearance order).
    pub fn add_node(&mut self, key: NodeKey) -> NodeIndex {
        if let Some(ix) = self.index.get(&key) {
            return *ix;
        }
        let ix = NodeIndex(self.nodes.len() as u32);
        self.nodes.push(key.clone());
        self.index.insert(key, ix);
        ix
    }

    /// Adds an undirected edge; duplicates (in either orientation) collapse.
    pub fn add_edge(&mut self, u: NodeIndex, v: NodeIndex, rel: RelationType) -> Result<()> {
        if u == v {
            return Err(Error::Graph(format!(
                "self-edge on node {}",
                self.nodes[u.index()]
            )));
        }
        let (tu, tv) = (
            self.nodes[u.index()].node_type,
            self.nodes[v.index()].node_type,
        );
        if !rel.admits(tu, tv) {
            return Err(Error::Graph(format!(
                "type pair inconsistent: relation {rel} cannot join {tu} and {tv}"
            )));
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.edges.insert((a, b, rel));
        Ok(())
    }

    pub fn build(self) -> HeteroGraph {
        let mut adjacency: Vec<BTreeSet<NodeIndex>> = vec![BTreeSet::new(); self.nodes.len()];
        for (u, v, _) in &self.edges {
            adjacency[u.index()].insert(*v);
            adjacency[v.index()].insert(*u);
        }
        HeteroGraph {
            nodes: self.nodes,
            index: self.index,
            edges: self.edges,
            adjacency: adjacency
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        }
    }
}

/// Result of hiding a fraction of ingredient-disease edges: the training
/// graph with those edges removed plus the hidden pairs themselves.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train_graph: HeteroGraph,
    /// Hidden pairs as `(ingredient, disease)` indices, sorted.
    pub hidden_positives: Vec<(NodeIndex, NodeIndex)>,
    pub hide_fraction: f64,
    pub seed: u64,
    pub original_id_edge_count: usize,
}

/// Rounds half away from zero (ties up for the non-negative values used here).
pub(crate) fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

/// Uniformly hides `round(fraction * |ID edges|)` ingredient-disease edges.
///
/// Identical `(graph, fraction, seed)` inputs produce the identical split.
pub fn hide_ingredient_disease_edges(
    g: &HeteroGraph,
    fraction: f64,
    seed: u64,
) -> Result<EdgeSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "hide fraction must lie in (0,1), got {fraction}"
        )));
    }
    let id_edges = g.edges_with_relation(RelationType::IngredientDisease);
    if id_edges.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 ingredient_disease edges to split, found {}",
            id_edges.len()
        )));
    }
    let n_hide = round_half_up(fraction * id_edges.len() as f64);
    if n_hide == 0 || n_hide == id_edges.len() {
        return Err(Error::Dataset(format!(
            "degenerate split: {n_hide} of {} ingredient_disease edges hidden",
            id_edges.len()
        )));
    }

    // Partial Fisher-Yates over the canonical edge order.
    let mut rng = rng_from_seed(seed);
    let mut pool: Vec<usize> = (0..id_edges.len()).collect();
    let mut hidden_ix: Vec<usize> = Vec::with_capacity(n_hide);
    for k in 0..n_hide {
        let j = k + rand::Rng::gen_range(&mut rng, 0..pool.len() - k);
        pool.swap(k, j);
        hidden_ix.push(pool[k]);
    }

    let hidden_set: BTreeSet<(NodeIndex, NodeIndex)> =
        hidden_ix.iter().map(|&i| id_edges[i]).collect();

    let mut builder = GraphBuilder::new();
    for key in g.nodes() {
        builder.add_node(key.clone());
    }
    for (u, v, rel) in g.edges() {
        if rel == RelationType::IngredientDisease && hidden_set.contains(&(u, v)) {
            continue;
        }
        builder.add_edge(u, v, rel)?;
    }
    let train_graph = builder.build();

    let mut hidden_positives: Vec<(NodeIndex, NodeIndex)> = hidden_set
        .into_iter()
        .map(|(u, v)| {
            if g.node_type(u) == NodeType::Ingredient {
                (u, v)
            } else {
                (v, u)
            }
        })
        .collect();
    hidden_positives.sort();

    Ok(EdgeSplit {
        train_graph,
        hidden_positives,
        hide_fraction: fraction,
        seed,
        original_id_edge_count: id_edges.len(),
    })
}

/// Identity feature matrix: row `i` is the indicator of node `i`.
pub fn one_hot_features(g: &HeteroGraph) -> ndarray::Array2<f64> {
    ndarray::Array2::eye(g.node_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(t: NodeType, id: &str) -> NodeKey {
        NodeKey::new(t, id).unwrap()
    }

    fn small_graph() -> HeteroGraph {
        // herb H1 - ingredient I1 - disease D1, plus I2-D1, I1-D2.
        let mut b = GraphBuilder::new();
        let h1 = b.add_node(key(NodeType::Herb, "H1"));
        let i1 = b.add_node(key(NodeType::Ingredient, "I1"));
        let i2 = b.add_node(key(NodeType::Ingredient, "I2"));
        let d1 = b.add_node(key(NodeType::Disease, "D1"));
        let d2 = b.add_node(key(NodeType::Disease, "D2"));
        b.add_edge(h1, i1, RelationType::HerbIngredient).unwrap();
        b.add_edge(i1, d1, RelationType::IngredientDisease).unwrap();
        b.add_edge(i2, d1, RelationType::IngredientDisease).unwrap();
        b.add_edge(i1, d2, RelationType::IngredientDisease).unwrap();
        b.build()
    }

    #[test]
    fn node_key_rejects_bad_ids() {
        assert!(NodeKey::new(NodeType::Herb, "").is_err());
        assert!(NodeKey::new(NodeType::Herb, "a\tb").is_err());
        assert!(NodeKey::new(NodeType::Herb, "a\nb").is_err());
        assert!(NodeKey::new(NodeType::Herb, "ok-id").is_ok());
    }

    #[test]
    fn builder_dedups_reversed_edges_and_rejects_self_edges() {
        let mut b = GraphBuilder::new();
        let h = b.add_node(key(NodeType::Herb, "H1"));
        let i = b.add_node(key(NodeType::Ingredient, "I1"));
        b.add_edge(h, i, RelationType::HerbIngredient).unwrap();
        b.add_edge(i, h, RelationType::HerbIngredient).unwrap();
        assert!(b.add_edge(h, h, RelationType::HerbIngredient).is_err());
        let g = b.build();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn builder_rejects_inconsistent_type_pair() {
        let mut b = GraphBuilder::new();
        let i1 = b.add_node(key(NodeType::Ingredient, "I1"));
        let i2 = b.add_node(key(NodeType::Ingredient, "I2"));
        let err = b.add_edge(i1, i2, RelationType::IngredientDisease);
        assert!(err.is_err());
        assert!(err.unwrap_err().to_string().contains("type pair inconsistent"));
    }

    #[test]
    fn adjacency_is_symmetric_and_sorted() {
        let g = small_graph();
        for u in 0..g.node_count() as u32 {
            let u = NodeIndex(u);
            let adj = g.neighbors(u);
            assert!(adj.windows(2).all(|w| w[0] < w[1]));
            for &v in adj {
                assert!(g.neighbors(v).contains(&u));
            }
        }
    }

    #[test]
    fn hide_produces_disjoint_partition_of_id_edges() {
        let g = small_graph();
        let split = hide_ingredient_disease_edges(&g, 0.34, 7).unwrap();
        assert_eq!(split.hidden_positives.len(), 1); // round(0.34 * 3)
        assert_eq!(split.original_id_edge_count, 3);
        let remaining = split
            .train_graph
            .edges_with_relation(RelationType::IngredientDisease);
        assert_eq!(remaining.len(), 2);
        // hidden and remaining are disjoint and cover the original set
        let hidden_canon: BTreeSet<_> = split
            .hidden_positives
            .iter()
            .map(|&(i, d)| if i < d { (i, d) } else { (d, i) })
            .collect();
        let remaining_set: BTreeSet<_> = remaining.into_iter().collect();
        assert!(hidden_canon.is_disjoint(&remaining_set));
        let original: BTreeSet<_> = g
            .edges_with_relation(RelationType::IngredientDisease)
            .into_iter()
            .collect();
        let union: BTreeSet<_> = hidden_canon.union(&remaining_set).copied().collect();
        assert_eq!(union, original);
        // non-ID edges untouched
        assert_eq!(
            split
                .train_graph
                .edges_with_relation(RelationType::HerbIngredient)
                .len(),
            1
        );
    }

    #[test]
    fn hide_is_deterministic_and_rejects_degenerate_splits() {
        let g = small_graph();
        let a = hide_ingredient_disease_edges(&g, 0.5, 42).unwrap();
        let b = hide_ingredient_disease_edges(&g, 0.5, 42).unwrap();
        assert_eq!(a.hidden_positives, b.hidden_positives);
        // round(0.1 * 3) = 0 hidden -> degenerate
        let err = hide_ingredient_disease_edges(&g, 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("degenerate split"));
        assert!(hide_ingredient_disease_edges(&g, 0.0, 1).is_err());
        assert!(hide_ingredient_disease_edges(&g, 1.0, 1).is_err());
    }

    #[test]
    fn one_hot_is_identity() {
        let g = small_graph();
        let x = one_hot_features(&g);
        assert_eq!(x.nrows(), g.node_count());
        for i in 0..x.nrows() {
            assert_eq!(x.row(i).sum(), 1.0);
            assert_eq!(x[[i, i]], 1.0);
        }
    }
}
