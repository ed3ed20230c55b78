//! Edge-list and split-manifest file formats.
//!
//! Edge list: UTF-8 TSV, five columns `src_type  src_id  relation  dst_type
//! dst_id`, lowercase type and relation names, `#`-prefixed comment lines,
//! no header. Isolated nodes are not representable in this format.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeSplit, GraphBuilder, HeteroGraph, NodeKey, NodeType, RelationType};
use crate::error::{Error, Result};

/// Loads a heterogeneous graph from a five-column TSV edge list.
///
/// Node indices are assigned in first-appearance order; duplicate lines and
/// reversed duplicates collapse to a single edge.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<HeteroGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut builder = GraphBuilder::new();
    let mut edge_lines = 0usize;

    for (ix, line) in text.lines().enumerate() {
        let lineno = ix + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let src_type = NodeType::parse(cols[0])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown node type `{}`", cols[0])))?;
        let relation = RelationType::parse(cols[2]).ok_or_else(|| {
            Error::parse(path, lineno, format!("unknown relation `{}`", cols[2]))
        })?;
        let dst_type = NodeType::parse(cols[3])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown node type `{}`", cols[3])))?;
        let src = NodeKey::new(src_type, cols[1])
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let dst = NodeKey::new(dst_type, cols[4])
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if !relation.admits(src_type, dst_type) {
            return Err(Error::parse(
                path,
                lineno,
                format!("type pair inconsistent: {relation} cannot join {src_type} and {dst_type}"),
            ));
        }
        if src == dst {
            return Err(Error::parse(path, lineno, format!("self-edge on {src}")));
        }
        let u = builder.add_node(src);
        let v = builder.add_node(dst);
        builder
            .add_edge(u, v, relation)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        edge_lines += 1;
    }

    if edge_lines == 0 {
        return Err(Error::Dataset(format!(
            "empty graph: no edges in {}",
            path.display()
        )));
    }
    Ok(builder.build())
}

/// Writes the canonical edge list: one line per edge triple, sources oriented
/// to match the relation's declared type order, sorted by `(u, v, relation)`.
pub fn write_edge_list(g: &HeteroGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, v, rel) in g.edges() {
        let (ku, kv) = (g.node(u), g.node(v));
        let (src, dst) = if ku.node_type == rel.endpoints().0 {
            (ku, kv)
        } else {
            (kv, ku)
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            src.node_type, src.raw_id, rel, dst.node_type, dst.raw_id
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// JSON sidecar of a split manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSidecar {
    pub fraction: f64,
    pub seed: u64,
    pub original_id_edge_count: usize,
}

/// Writes `hidden.tsv` (`ingredient_id  disease_id` rows) and `split.json`
/// into `dir`.
pub fn write_split_manifest(split: &EdgeSplit, g: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let hidden_path = dir.join("hidden.tsv");
    let file = fs::File::create(&hidden_path).map_err(|e| Error::io(&hidden_path, e))?;
    let mut w = BufWriter::new(file);
    for &(i, d) in &split.hidden_positives {
        writeln!(w, "{}\t{}", g.node(i).raw_id, g.node(d).raw_id)
            .map_err(|e| Error::io(&hidden_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&hidden_path, e))?;

    let sidecar = SplitSidecar {
        fraction: split.hide_fraction,
        seed: split.seed,
        original_id_edge_count: split.original_id_edge_count,
    };
    let json_path = dir.join("split.json");
    let body = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("serializing split sidecar: {e}")))?;
    fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))
}

/// Reconstructs an [`EdgeSplit`] from a manifest directory and the original
/// graph it was derived from.
pub fn read_split_manifest(dir: impl AsRef<Path>, original: &HeteroGraph) -> Result<EdgeSplit> {
    let dir = dir.as_ref();
    let json_path = dir.join("split.json");
    let body = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: SplitSidecar = serde_json::from_str(&body)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", json_path.display())))?;

    let hidden_path = dir.join("hidden.tsv");
    let text = fs::read_to_string(&hidden_path).map_err(|e| Error::io(&hidden_path, e))?;
    let mut hidden = Vec::new();
    for (ix, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (i_id, d_id) = line.split_once('\t').ok_or_else(|| {
            Error::parse(&hidden_path, ix + 1, "expected two tab-separated columns")
        })?;
        let i_key = NodeKey::new(NodeType::Ingredient, i_id)?;
        let d_key = NodeKey::new(NodeType::Disease, d_id)?;
        let i = original.node_index(&i_key).ok_or_else(|| {
            Error::parse(&hidden_path, ix + 1, format!("unknown ingredient {i_key}"))
        })?;
        let d = original.node_index(&d_key).ok_or_else(|| {
            Error::parse(&hidden_path, ix + 1, format!("unknown disease {d_key}"))
        })?;
        hidden.push((i, d));
    }
    hidden.sort();

    let hidden_canon: std::collections::BTreeSet<_> = hidden
        .iter()
        .map(|&(i, d)| if i < d { (i, d) } else { (d, i) })
        .collect();
    let mut builder = GraphBuilder::new();
    for key in original.nodes() {
        builder.add_node(key.clone());
    }
    for (u, v, rel) in original.edges() {
        if rel == RelationType::IngredientDisease && hidden_canon.contains(&(u, v)) {
            continue;
        }
        builder.add_edge(u, v, rel)?;
    }

    Ok(EdgeSplit {
        train_graph: builder.build(),
        hidden_positives: hidden,
        hide_fraction: sidecar.fraction,
        seed: sidecar.seed,
        original_id_edge_count: sidecar.original_id_edge_count,
    })
}
