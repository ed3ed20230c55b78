//! Planted-community synthetic benchmark mimicking the 4-node-type /
//! 7-relation network shape, for experiments without real association data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GraphBuilder, HeteroGraph, NodeIndex, NodeKey, NodeType, RelationType};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Parameters of the planted-community generator.
///
/// Every node is assigned to one of `communities` groups uniformly; each
/// type-admissible pair becomes an edge independently with probability
/// `p_in` (same community) or `p_out` (different communities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub herbs: usize,
    pub ingredients: usize,
    pub targets: usize,
    pub diseases: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticParams {
    /// Desk-scale benchmark shape: two planted communities over 1100 nodes.
    fn default() -> Self {
        SyntheticParams {
            herbs: 100,
            ingredients: 500,
            targets: 300,
            diseases: 200,
            communities: 2,
            p_in: 0.05,
            p_out: 0.002,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_in.is_finite() && self.p_out.is_finite()) {
            return Err(Error::InvalidParameter("p_in/p_out must be finite".into()));
        }
        // p_in == p_out is allowed (uninformative communities); p_in must
        // still dominate and be usable as a probability.
        if !(self.p_in >= self.p_out && self.p_out >= 0.0 && self.p_in > 0.0 && self.p_in <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "require 0 <= p_out <= p_in <= 1 with p_in > 0, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.communities == 0 {
            return Err(Error::InvalidParameter("communities must be >= 1".into()));
        }
        for (name, count) in [
            ("herbs", self.herbs),
            ("ingredients", self.ingredients),
            ("targets", self.targets),
            ("diseases", self.diseases),
        ] {
            if count < self.communities {
                return Err(Error::InvalidParameter(format!(
                    "{name} count {count} is below the community count {}",
                    self.communities
                )));
            }
        }
        Ok(())
    }
}

/// Generated benchmark graph plus its planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: HeteroGraph,
    /// Community assignment per node, aligned with node indices.
    pub communities: Vec<u32>,
    /// Isolated nodes are kept in the graph; this reports how many there are.
    pub isolated_nodes: usize,
    pub expected_edges: f64,
}

/// Generates the synthetic benchmark. Bit-reproducible for a fixed seed.
pub fn generate_synthetic_hitd(params: &SyntheticParams) -> Result<SyntheticGraph> {
    params.validate()?;
    let mut rng = rng_from_seed(params.seed);

    let mut builder = GraphBuilder::new();
    let mut by_type: Vec<Vec<NodeIndex>> = Vec::with_capacity(4);
    for (node_type, prefix, count) in [
        (NodeType::Herb, "H", params.herbs),
        (NodeType::Ingredient, "I", params.ingredients),
        (NodeType::Target, "T", params.targets),
        (NodeType::Disease, "D", params.diseases),
    ] {
        let ixs = (0..count)
            .map(|i| builder.add_node(NodeKey::new(node_type, format!("{prefix}{i}")).unwrap()))
            .collect();
        by_type.push(ixs);
    }
    let n_nodes: usize = by_type.iter().map(|v| v.len()).sum();
    let communities: Vec<u32> = (0..n_nodes)
        .map(|_| rng.gen_range(0..params.communities as u32))
        .collect();

    let of_type = |t: NodeType| -> &Vec<NodeIndex> {
        match t {
            NodeType::Herb => &by_type[0],
            NodeType::Ingredient => &by_type[1],
            NodeType::Target => &by_type[2],
            NodeType::Disease => &by_type[3],
        }
    };

    let mut expected = 0.0f64;
    for rel in RelationType::ALL {
        let (ta, tb) = rel.endpoints();
        if ta == tb {
            let nodes = of_type(ta);
            for (i, &u) in nodes.iter().enumerate() {
                for &v in &nodes[i + 1..] {
                    let p = if communities[u.index()] == communities[v.index()] {
                        params.p_in
                    } else {
                        params.p_out
                    };
                    expected += p;
                    if rng.gen::<f64>() < p {
                        builder.add_edge(u, v, rel)?;
                    }
                }
            }
        } else {
            for &u in of_type(ta) {
                for &v in of_type(tb) {
                    let p = if communities[u.index()] == communities[v.index()] {
                        params.p_in
                    } else {
                        params.p_out
                    };
                    expected += p;
                    if rng.gen::<f64>() < p {
                        builder.add_edge(u, v, rel)?;
                    }
                }
            }
        }
    }

    if expected == 0.0 {
        return Err(Error::InvalidParameter(
            "parameters produce an expected edge count of 0".into(),
        ));
    }

    let graph = builder.build();
    let isolated_nodes = graph.isolated_node_count();
    Ok(SyntheticGraph {
        graph,
        communities,
        isolated_nodes,
        expected_edges: expected,
    })
}
