//! Second-order biased random walks.
//!
//! The step distribution from state `(prev, cur)` follows the usual
//! return/in-out bias: unnormalized weight `1/p` for stepping back to
//! `prev`, `1` for a neighbor of `cur` that is also adjacent to `prev`,
//! and `1/q` otherwise. The first step from a start node (no predecessor)
//! is uniform over its neighbors. `p = q = 1` degenerates to unbiased
//! first-order walks.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeIndex, NodeKey};
use crate::seed::{derive_seed_indexed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Return parameter: larger values discourage immediately revisiting
    /// the predecessor.
    pub p: f64,
    /// In-out parameter: larger values keep the walk near the predecessor's
    /// neighborhood (BFS-like), smaller values push it outward (DFS-like).
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            p: 1.0,
            q: 1.0,
            walk_length: 80,
            walks_per_node: 10,
            seed: 0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0 && self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "walk parameters p, q must be finite and positive, got p={} q={}",
                self.p, self.q
            )));
        }
        if self.walk_length < 2 {
            return Err(Error::InvalidParameter(format!(
                "walk_length must be >= 2, got {}",
                self.walk_length
            )));
        }
        if self.walks_per_node < 1 {
            return Err(Error::InvalidParameter("walks_per_node must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<NodeIndex>>,
    pub params: WalkParams,
    /// Nodes that produced no walks because they have no neighbors.
    pub skipped_isolated: usize,
}

/// Normalized transition distribution from state `(prev, cur)`.
///
/// `prev = None` means a walk's first step: uniform over `cur`'s neighbors.
/// An isolated `cur` yields an empty distribution (the caller ends the walk).
pub fn transition_weights(
    g: &HeteroGraph,
    prev: Option<NodeIndex>,
    cur: NodeIndex,
    params: &WalkParams,
) -> Vec<(NodeIndex, f64)> {
    let neighbors = g.neighbors(cur);
    if neighbors.is_empty() {
        return Vec::new();
    }
    let raw: Vec<f64> = match prev {
        None => vec![1.0; neighbors.len()],
        Some(prev) => neighbors
            .iter()
            .map(|&next| {
                if next == prev {
                    1.0 / params.p
                } else if g.is_adjacent(prev, next) {
                    1.0
                } else {
                    1.0 / params.q
                }
            })
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    neighbors
        .iter()
        .zip(raw)
        .map(|(&n, w)| (n, w / total))
        .collect()
}

/// Alias tables for every walk state: one per node for first steps, one per
/// directed edge `(prev, cur)` for biased steps.
///
/// Memory is `O(sum over directed edges (prev,cur) of deg(cur))`; the walker
/// itself builds tables lazily (see [`generate_walks`]), this eager builder
/// exists for workloads that touch every state anyway.
#[derive(Debug)]
pub struct AliasTables {
    pub first_step: Vec<Option<AliasTable>>,
    pub second_step: HashMap<(NodeIndex, NodeIndex), AliasTable>,
}

pub fn build_alias_tables(g: &HeteroGraph, params: &WalkParams) -> Result<AliasTables> {
    params.validate()?;
    if g.node_count() == 0 {
        return Err(Error::Graph("cannot build alias tables for an empty graph".into()));
    }
    let mut first_step = Vec::with_capacity(g.node_count());
    for ix in 0..g.node_count() as u32 {
        let cur = NodeIndex(ix);
        first_step.push(build_state_table(g, None, cur, params)?);
    }
    let mut second_step = HashMap::new();
    for ix in 0..g.node_count() as u32 {
        let cur = NodeIndex(ix);
        for &prev in g.neighbors(cur) {
            if let Some(table) = build_state_table(g, Some(prev), cur, params)? {
                second_step.insert((prev, cur), table);
            }
        }
    }
    Ok(AliasTables { first_step, second_step })
}

fn build_state_table(
    g: &HeteroGraph,
    prev: Option<NodeIndex>,
    cur: NodeIndex,
    params: &WalkParams,
) -> Result<Option<AliasTable>> {
    let weights: Vec<f64> = transition_weights(g, prev, cur, params)
        .into_iter()
        .map(|(_, w)| w)
        .collect();
    if weights.is_empty() {
        return Ok(None);
    }
    AliasTable::new(&weights).map(Some)
}

/// Lazily-built alias cache keyed by walk state.
struct LazyTables<'g> {
    g: &'g HeteroGraph,
    params: &'g WalkParams,
    first: Vec<Option<Option<AliasTable>>>,
    second: HashMap<(NodeIndex, NodeIndex), AliasTable>,
}

impl<'g> LazyTables<'g> {
    fn new(g: &'g HeteroGraph, params: &'g WalkParams) -> Self {
        LazyTables {
            g,
            params,
            first: vec![None; g.node_count()],
            second: HashMap::new(),
        }
    }

    fn next_step<R: rand::Rng>(
        &mut self,
        prev: Option<NodeIndex>,
        cur: NodeIndex,
        rng: &mut R,
    ) -> Option<NodeIndex> {
        let neighbors = self.g.neighbors(cur);
        if neighbors.is_empty() {
            return None;
        }
        let table = match prev {
            None => {
                let slot = &mut self.first[cur.index()];
                if slot.is_none() {
                    *slot = Some(
                        build_state_table(self.g, None, cur, self.params).expect("valid weights"),
                    );
                }
                slot.as_ref().unwrap().as_ref()?
            }
            Some(prev) => self
                .second
                .entry((prev, cur))
                .or_insert_with(|| {
                    build_state_table(self.g, Some(prev), cur, self.params)
                        .expect("valid weights")
                        .expect("non-isolated")
                }),
        };
        Some(neighbors[table.sample(rng)])
    }
}

/// Generates `walks_per_node` walks from every non-isolated node.
///
/// Start order is reshuffled each round with a seeded stream, and each walk
/// consumes its own RNG stream derived from `(seed, round, start)`, so the
/// corpus is byte-identical regardless of table caching or worker layout.
pub fn generate_walks(g: &HeteroGraph, params: &WalkParams) -> Result<WalkCorpus> {
    params.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::Graph("no walkable nodes: graph has no edges".into()));
    }
    let starts: Vec<NodeIndex> = (0..g.node_count() as u32)
        .map(NodeIndex)
        .filter(|&ix| g.degree(ix) > 0)
        .collect();
    let skipped_isolated = g.node_count() - starts.len();

    let mut tables = LazyTables::new(g, params);
    let mut walks = Vec::with_capacity(starts.len() * params.walks_per_node);
    for round in 0..params.walks_per_node {
        let mut order = starts.clone();
        let mut order_rng =
            rng_from_seed(derive_seed_indexed(params.seed, "walk_order", &[round as u64]));
        order.shuffle(&mut order_rng);
        for start in order {
            let mut rng = rng_from_seed(derive_seed_indexed(
                params.seed,
                "walk",
                &[round as u64, start.0 as u64],
            ));
            let mut walk = Vec::with_capacity(params.walk_length);
            walk.push(start);
            let mut prev: Option<NodeIndex> = None;
            let mut cur = start;
            while walk.len() < params.walk_length {
                match tables.next_step(prev, cur, &mut rng) {
                    Some(next) => {
                        walk.push(next);
                        prev = Some(cur);
                        cur = next;
                    }
                    None => break,
                }
            }
            if walk.len() >= 2 {
                walks.push(walk);
            }
        }
    }
    Ok(WalkCorpus {
        walks,
        params: params.clone(),
        skipped_isolated,
    })
}

/// Writes one walk per line as space-separated `type:raw_id` strings.
pub fn write_walks(corpus: &WalkCorpus, g: &HeteroGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for walk in &corpus.walks {
        let line: Vec<String> = walk.iter().map(|&ix| g.node(ix).to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a walk corpus dump back into node indices of `g`.
pub fn read_walks(path: impl AsRef<Path>, g: &HeteroGraph) -> Result<Vec<Vec<NodeIndex>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut walks = Vec::new();
    for (ix, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut walk = Vec::new();
        for token in line.split(' ') {
            let key = NodeKey::parse(token)
                .map_err(|e| Error::parse(path, ix + 1, e.to_string()))?;
            let node = g.node_index(&key).ok_or_else(|| {
                Error::parse(path, ix + 1, format!("node {key} not present in graph"))
            })?;
            walk.push(node);
        }
        if walk.len() < 2 {
            return Err(Error::parse(path, ix + 1, "walk shorter than 2 nodes"));
        }
        walks.push(walk);
    }
    Ok(walks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, NodeType, RelationType};

    fn path_graph() -> (HeteroGraph, NodeIndex, NodeIndex, NodeIndex) {
        // A - B - C as herb-ingredient-target
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKey::new(NodeType::Herb, "A").unwrap());
        let m = b.add_node(NodeKey::new(NodeType::Ingredient, "B").unwrap());
        let c = b.add_node(NodeKey::new(NodeType::Target, "C").unwrap());
        b.add_edge(a, m, RelationType::HerbIngredient).unwrap();
        b.add_edge(m, c, RelationType::IngredientTarget).unwrap();
        (b.build(), a, m, c)
    }

    fn triangle_graph() -> (HeteroGraph, NodeIndex, NodeIndex, NodeIndex) {
        let mut b = GraphBuilder::new();
        let h = b.add_node(NodeKey::new(NodeType::Herb, "H").unwrap());
        let i = b.add_node(NodeKey::new(NodeType::Ingredient, "I").unwrap());
        let t = b.add_node(NodeKey::new(NodeType::Target, "T").unwrap());
        b.add_edge(h, i, RelationType::HerbIngredient).unwrap();
        b.add_edge(i, t, RelationType::IngredientTarget).unwrap();
        b.add_edge(h, t, RelationType::HerbTarget).unwrap();
        (b.build(), h, i, t)
    }

    fn params(p: f64, q: f64) -> WalkParams {
        WalkParams {
            p,
            q,
            walk_length: 3,
            walks_per_node: 1,
            seed: 0,
        }
    }

    #[test]
    fn biased_weights_on_path_match_hand_enumeration() {
        let (g, a, m, c) = path_graph();
        // prev=A, cur=B, p=2, q=0.5: back to A gets 1/2, C (not adjacent to
        // A) gets 1/0.5 = 2 -> P(A)=0.2, P(C)=0.8
        let w = transition_weights(&g, Some(a), m, &params(2.0, 0.5));
        let lookup: HashMap<_, _> = w.into_iter().collect();
        assert!((lookup[&a] - 0.2).abs() < 1e-12);
        assert!((lookup[&c] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn triangle_return_probability_follows_p() {
        let (g, h, i, _t) = triangle_graph();
        // prev=H, cur=I, p=4, q=1: H gets 1/4; T is adjacent to H so gets 1.
        let w = transition_weights(&g, Some(h), i, &params(4.0, 1.0));
        let lookup: HashMap<_, _> = w.into_iter().collect();
        assert!((lookup[&h] - 0.2).abs() < 1e-12);
        let other: f64 = 1.0 - lookup[&h];
        assert!((other - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unit_p_q_is_uniform_and_normalized() {
        let (g, _a, m, _c) = path_graph();
        let w = transition_weights(&g, Some(NodeIndex(0)), m, &params(1.0, 1.0));
        let total: f64 = w.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (_, p) in w {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_node_yields_empty_distribution() {
        let mut b = GraphBuilder::new();
        let h = b.add_node(NodeKey::new(NodeType::Herb, "H").unwrap());
        let i = b.add_node(NodeKey::new(NodeType::Ingredient, "I").unwrap());
        b.add_edge(h, i, RelationType::HerbIngredient).unwrap();
        let lone = b.add_node(NodeKey::new(NodeType::Disease, "L").unwrap());
        let g = b.build();
        assert!(transition_weights(&g, None, lone, &params(1.0, 1.0)).is_empty());
    }

    #[test]
    fn precomputed_tables_cover_all_states() {
        let (g, _h, _i, _t) = triangle_graph();
        let tables = build_alias_tables(&g, &params(2.0, 0.5)).unwrap();
        assert_eq!(tables.first_step.len(), 3);
        assert_eq!(tables.second_step.len(), 6); // 3 undirected edges
        for ((prev, cur), table) in &tables.second_step {
            let expected = transition_weights(&g, Some(*prev), *cur, &params(2.0, 0.5));
            let encoded = table.outcome_probabilities();
            for ((_, want), got) in expected.iter().zip(encoded) {
                assert!((want - got).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn star_graph_walks_are_forced_paths() {
        // K_{1,3}: center ingredient, three herb leaves
        let mut b = GraphBuilder::new();
        let center = b.add_node(NodeKey::new(NodeType::Ingredient, "C").unwrap());
        let leaves: Vec<_> = (0..3)
            .map(|k| b.add_node(NodeKey::new(NodeType::Herb, format!("L{k}")).unwrap()))
            .collect();
        for &l in &leaves {
            b.add_edge(center, l, RelationType::HerbIngredient).unwrap();
        }
        let g = b.build();
        let corpus = generate_walks(
            &g,
            &WalkParams {
                p: 1.0,
                q: 1.0,
                walk_length: 3,
                walks_per_node: 5,
                seed: 3,
            },
        )
        .unwrap();
        for walk in &corpus.walks {
            assert_eq!(walk.len(), 3);
            if leaves.contains(&walk[0]) {
                assert_eq!(walk[1], center);
                assert!(leaves.contains(&walk[2]));
            }
        }
    }

    #[test]
    fn walk_count_and_validity() {
        let (g, ..) = triangle_graph();
        let p = WalkParams {
            p: 1.0,
            q: 2.0,
            walk_length: 10,
            walks_per_node: 7,
            seed: 5,
        };
        let corpus = generate_walks(&g, &p).unwrap();
        assert_eq!(corpus.walks.len(), 3 * 7);
        for walk in &corpus.walks {
            for pair in walk.windows(2) {
                assert!(g.is_adjacent(pair[0], pair[1]), "walk edge missing");
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_for_fixed_seed() {
        let (g, ..) = triangle_graph();
        let p = WalkParams {
            p: 0.5,
            q: 4.0,
            walk_length: 12,
            walks_per_node: 4,
            seed: 99,
        };
        let a = generate_walks(&g, &p).unwrap();
        let b = generate_walks(&g, &p).unwrap();
        assert_eq!(a.walks, b.walks);
    }

    #[test]
    fn edgeless_graph_is_rejected_and_isolated_nodes_reported() {
        let mut b = GraphBuilder::new();
        b.add_node(NodeKey::new(NodeType::Herb, "H").unwrap());
        let g = b.build();
        assert!(generate_walks(&g, &params(1.0, 1.0)).is_err());

        let (mut builder, _) = {
            let mut b = GraphBuilder::new();
            let h = b.add_node(NodeKey::new(NodeType::Herb, "H").unwrap());
            let i = b.add_node(NodeKey::new(NodeType::Ingredient, "I").unwrap());
            b.add_edge(h, i, RelationType::HerbIngredient).unwrap();
            (b, h)
        };
        builder.add_node(NodeKey::new(NodeType::Disease, "lonely").unwrap());
        let g = builder.build();
        let corpus = generate_walks(&g, &params(1.0, 1.0)).unwrap();
        assert_eq!(corpus.skipped_isolated, 1);
        assert!(corpus.walks.iter().all(|w| w[0] != NodeIndex(2)));
    }

    #[test]
    fn walk_dump_round_trips() {
        let (g, ..) = triangle_graph();
        let corpus = generate_walks(&g, &params(1.0, 1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walks.txt");
        write_walks(&corpus, &g, &path).unwrap();
        let back = read_walks(&path, &g).unwrap();
        assert_eq!(back, corpus.walks);
    }
}
