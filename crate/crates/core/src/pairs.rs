//! Labeled ingredient-disease pair datasets.
//!
//! Positives are the hidden edges of an [`EdgeSplit`]; negatives are drawn
//! uniformly without replacement from ingredient-disease pairs that are
//! absent from the *original* graph (visible or hidden), so no sampled
//! negative is ever a true association. Pair features are the Hadamard
//! product of the two node embeddings.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{round_half_up, EdgeSplit, HeteroGraph, NodeKey, NodeType, RelationType};
use crate::seed::{derive_seed, rng_from_seed};
use crate::skipgram::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub ingredient: NodeKey,
    pub disease: NodeKey,
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct PairDataset {
    pub samples: Vec<PairSample>,
    pub neg_ratio: f64,
    pub seed: u64,
}

impl PairDataset {
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }
}

/// Elementwise product.
pub fn hadamard(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::InvalidParameter(format!(
            "hadamard length mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).collect())
}

/// Builds the labeled pair dataset from embeddings and an edge split.
pub fn build_pair_dataset(
    embeddings: &EmbeddingMatrix,
    split: &EdgeSplit,
    original: &HeteroGraph,
    neg_ratio: f64,
    seed: u64,
) -> Result<PairDataset> {
    if !(neg_ratio.is_finite() && neg_ratio > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "neg_ratio must be positive, got {neg_ratio}"
        )));
    }
    if split.hidden_positives.is_empty() {
        return Err(Error::Dataset("split has no hidden positives".into()));
    }

    // Embeddings are looked up by node key, never by bare index, so a
    // reordered embedding file cannot silently mislabel pairs.
    let emb_row = |key: &NodeKey| -> Result<&[f64]> {
        embeddings
            .key_row(key)
            .ok_or_else(|| Error::Dataset(format!("no embedding for node {key}")))
    };

    let mut samples = Vec::new();
    for &(i, d) in &split.hidden_positives {
        let (ki, kd) = (original.node(i).clone(), original.node(d).clone());
        let features = hadamard(emb_row(&ki)?, emb_row(&kd)?)?;
        samples.push(PairSample {
            ingredient: ki,
            disease: kd,
            features,
            label: 1,
        });
    }

    let id_edges: BTreeSet<(u32, u32)> = original
        .edges_with_relation(RelationType::IngredientDisease)
        .into_iter()
        .map(|(u, v)| {
            if original.node_type(u) == NodeType::Ingredient {
                (u.0, v.0)
            } else {
                (v.0, u.0)
            }
        })
        .collect();

    let ingredients = original.node_indices_of_type(NodeType::Ingredient);
    let diseases = original.node_indices_of_type(NodeType::Disease);
    let mut non_edges: Vec<(u32, u32)> = Vec::new();
    for &i in &ingredients {
        for &d in &diseases {
            if !id_edges.contains(&(i.0, d.0)) {
                non_edges.push((i.0, d.0));
            }
        }
    }

    let wanted = round_half_up(neg_ratio * split.hidden_positives.len() as f64);
    if wanted > non_edges.len() {
        return Err(Error::Dataset(format!(
            "cannot sample {wanted} negatives: only {} ingredient-disease non-edges exist",
            non_edges.len()
        )));
    }

    let mut rng = rng_from_seed(derive_seed(seed, "negative_pairs"));
    for k in 0..wanted {
        let j = k + rng.gen_range(0..non_edges.len() - k);
        non_edges.swap(k, j);
        let (i, d) = non_edges[k];
        let ki = original.node(crate::graph::NodeIndex(i)).clone();
        let kd = original.node(crate::graph::NodeIndex(d)).clone();
        let features = hadamard(emb_row(&ki)?, emb_row(&kd)?)?;
        samples.push(PairSample {
            ingredient: ki,
            disease: kd,
            features,
            label: 0,
        });
    }

    Ok(PairDataset {
        samples,
        neg_ratio,
        seed,
    })
}

/// Stratified train/test split: `round(ratio * |class|)` of each label goes
/// to train, the remainder to test. Deterministic for a fixed seed.
pub fn split_train_test(
    ds: &PairDataset,
    ratio: f64,
    seed: u64,
) -> Result<(PairDataset, PairDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train ratio must lie in (0,1), got {ratio}"
        )));
    }
    let pos: Vec<usize> = (0..ds.samples.len())
        .filter(|&i| ds.samples[i].label == 1)
        .collect();
    let neg: Vec<usize> = (0..ds.samples.len())
        .filter(|&i| ds.samples[i].label == 0)
        .collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 samples of each class to split, found {} positives / {} negatives",
            pos.len(),
            neg.len()
        )));
    }

    let mut rng = rng_from_seed(derive_seed(seed, "train_test_split"));
    let mut take = |indices: &[usize], label: &str| -> Result<(Vec<usize>, Vec<usize>)> {
        let mut shuffled = indices.to_vec();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let k = round_half_up(ratio * shuffled.len() as f64);
        if k == 0 || k == shuffled.len() {
            return Err(Error::Dataset(format!(
                "{label} stratum would be empty on one side of the split"
            )));
        }
        let test = shuffled.split_off(k);
        Ok((shuffled, test))
    };
    let (pos_train, pos_test) = take(&pos, "positive")?;
    let (neg_train, neg_test) = take(&neg, "negative")?;

    let collect = |mut ixs: Vec<usize>, more: Vec<usize>| -> Vec<PairSample> {
        ixs.extend(more);
        ixs.sort_unstable();
        ixs.into_iter().map(|i| ds.samples[i].clone()).collect()
    };
    let train = PairDataset {
        samples: collect(pos_train, neg_train),
        neg_ratio: ds.neg_ratio,
        seed,
    };
    let test = PairDataset {
        samples: collect(pos_test, neg_test),
        neg_ratio: ds.neg_ratio,
        seed,
    };
    Ok((train, test))
}

/// Writes `ingredient_key  disease_key  label  f0 ... f{d-1}` rows.
pub fn write_pair_tsv(ds: &PairDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in &ds.samples {
        let mut line = format!("{}\t{}\t{}", s.ingredient, s.disease, s.label);
        for v in &s.features {
            line.push_str(&format!("\t{v:.8e}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pair TSV written by [`write_pair_tsv`].
pub fn read_pair_tsv(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut dim: Option<usize> = None;
    for (ix, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::parse(path, ix + 1, "expected at least 4 columns"));
        }
        let ingredient =
            NodeKey::parse(cols[0]).map_err(|e| Error::parse(path, ix + 1, e.to_string()))?;
        let disease =
            NodeKey::parse(cols[1]).map_err(|e| Error::parse(path, ix + 1, e.to_string()))?;
        let label: u8 = cols[2]
            .parse()
            .map_err(|e| Error::parse(path, ix + 1, format!("bad label: {e}")))?;
        if label > 1 {
            return Err(Error::parse(path, ix + 1, "label must be 0 or 1"));
        }
        let features: Vec<f64> = cols[3..]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::parse(path, ix + 1, format!("bad feature: {e}")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(Error::parse(path, ix + 1, "inconsistent feature width"));
            }
            _ => {}
        }
        samples.push(PairSample {
            ingredient,
            disease,
            features,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!("no samples in {}", path.display())));
    }
    Ok(PairDataset {
        samples,
        neg_ratio: 0.0,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        generate_synthetic_hitd, hide_ingredient_disease_edges, SyntheticParams,
    };
    use ndarray::Array2;

    fn fixture() -> (HeteroGraph, EdgeSplit, EmbeddingMatrix) {
        let params = SyntheticParams {
            herbs: 4,
            ingredients: 20,
            targets: 8,
            diseases: 10,
            communities: 2,
            p_in: 0.5,
            p_out: 0.1,
            seed: 6,
        };
        let synth = generate_synthetic_hitd(&params).unwrap();
        let g = synth.graph;
        let split = hide_ingredient_disease_edges(&g, 0.3, 10).unwrap();
        let n = g.node_count();
        let d = 4;
        let mut rng = rng_from_seed(3);
        let vectors =
            Array2::from_shape_fn((n, d), |_| rand::Rng::gen::<f64>(&mut rng) * 2.0 - 1.0);
        let emb = EmbeddingMatrix {
            vectors,
            context_vectors: None,
            node_keys: g.nodes().to_vec(),
        };
        (g, split, emb)
    }

    #[test]
    fn hadamard_identities() {
        let u = vec![1.0, 2.0, 3.0];
        let ones = vec![1.0, 1.0, 1.0];
        assert_eq!(hadamard(&u, &ones).unwrap(), u);
        assert_eq!(
            hadamard(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(),
            vec![4.0, 10.0, 18.0]
        );
        let v = vec![0.5, -2.0, 0.25];
        assert_eq!(hadamard(&u, &v).unwrap(), hadamard(&v, &u).unwrap());
        assert!(hadamard(&u, &[1.0]).is_err());
        assert_eq!(hadamard(&u, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dataset_counts_and_label_rule() {
        let (g, split, emb) = fixture();
        let ds = build_pair_dataset(&emb, &split, &g, 3.0, 5).unwrap();
        let wanted = round_half_up(3.0 * split.hidden_positives.len() as f64);
        assert_eq!(ds.positives(), split.hidden_positives.len());
        assert_eq!(ds.negatives(), wanted);

        // every positive is a hidden pair; every negative absent from the
        // original ID edge set (independent membership scan)
        let id_edges: BTreeSet<(NodeKey, NodeKey)> = g
            .edges_with_relation(RelationType::IngredientDisease)
            .into_iter()
            .map(|(u, v)| {
                let (a, b) = (g.node(u).clone(), g.node(v).clone());
                if a.node_type == NodeType::Ingredient {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        for s in &ds.samples {
            let key = (s.ingredient.clone(), s.disease.clone());
            if s.label == 1 {
                assert!(id_edges.contains(&key));
            } else {
                assert!(!id_edges.contains(&key));
            }
        }

        // no duplicate pairs
        let mut seen = BTreeSet::new();
        for s in &ds.samples {
            assert!(seen.insert((s.ingredient.clone(), s.disease.clone())));
        }

        // features re-derivable from the embeddings
        for s in ds.samples.iter().take(10) {
            let expect = hadamard(
                emb.key_row(&s.ingredient).unwrap(),
                emb.key_row(&s.disease).unwrap(),
            )
            .unwrap();
            assert_eq!(s.features, expect);
        }
    }

    #[test]
    fn exhausted_non_edges_error() {
        let (g, split, emb) = fixture();
        let err = build_pair_dataset(&emb, &split, &g, 1e6, 5).unwrap_err();
        assert!(err.to_string().contains("non-edges exist"), "{err}");
    }

    #[test]
    fn split_is_stratified_partition() {
        let (g, split, emb) = fixture();
        let ds = build_pair_dataset(&emb, &split, &g, 4.0, 5).unwrap();
        let (train, test) = split_train_test(&ds, 0.7, 8).unwrap();
        assert_eq!(train.positives(), round_half_up(0.7 * ds.positives() as f64));
        assert_eq!(train.negatives(), round_half_up(0.7 * ds.negatives() as f64));
        assert_eq!(train.samples.len() + test.samples.len(), ds.samples.len());

        let key = |s: &PairSample| (s.ingredient.clone(), s.disease.clone());
        let train_keys: BTreeSet<_> = train.samples.iter().map(key).collect();
        let test_keys: BTreeSet<_> = test.samples.iter().map(key).collect();
        assert!(train_keys.is_disjoint(&test_keys));
        let all: BTreeSet<_> = ds.samples.iter().map(key).collect();
        let union: BTreeSet<_> = train_keys.union(&test_keys).cloned().collect();
        assert_eq!(all, union);

        // determinism
        let (train2, test2) = split_train_test(&ds, 0.7, 8).unwrap();
        assert_eq!(train.samples, train2.samples);
        assert_eq!(test.samples, test2.samples);
    }

    #[test]
    fn split_ten_pos_hundred_neg() {
        let (g, split, emb) = fixture();
        let mut ds = build_pair_dataset(&emb, &split, &g, 4.0, 5).unwrap();
        // trim to exactly 10 positives and 100 negatives
        let mut pos: Vec<PairSample> = ds
            .samples
            .iter()
            .filter(|s| s.label == 1)
            .take(10)
            .cloned()
            .collect();
        let neg: Vec<PairSample> = ds
            .samples
            .iter()
            .filter(|s| s.label == 0)
            .take(100)
            .cloned()
            .collect();
        assert_eq!(pos.len(), 10);
        assert_eq!(neg.len(), 100);
        pos.extend(neg);
        ds.samples = pos;
        let (train, test) = split_train_test(&ds, 0.7, 1).unwrap();
        assert_eq!(train.positives(), 7);
        assert_eq!(train.negatives(), 70);
        assert_eq!(test.positives(), 3);
        assert_eq!(test.negatives(), 30);
    }

    #[test]
    fn pair_tsv_round_trip() {
        let (g, split, emb) = fixture();
        let ds = build_pair_dataset(&emb, &split, &g, 2.0, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        write_pair_tsv(&ds, &path).unwrap();
        let back = read_pair_tsv(&path).unwrap();
        assert_eq!(back.samples.len(), ds.samples.len());
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            assert_eq!(a.ingredient, b.ingredient);
            assert_eq!(a.disease, b.disease);
            assert_eq!(a.label, b.label);
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() <= y.abs().max(1e-12) * 1e-8);
            }
        }
    }

    use crate::seed::rng_from_seed;
}
