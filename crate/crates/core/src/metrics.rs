//! Threshold-free (AUC, average precision) and thresholded evaluation.
//!
//! AUC follows the Mann-Whitney convention: ties between a positive and a
//! negative count one half. Average precision treats equal-score groups
//! atomically: precision is computed after including the whole tie group and
//! every positive in the group contributes that precision.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<ScoredLabels> {
        if scores.len() != labels.len() || scores.is_empty() {
            return Err(Error::InvalidParameter(
                "scores and labels must be non-empty and of equal length".into(),
            ));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite".into()));
        }
        Ok(ScoredLabels { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().map(|&l| l as usize).sum()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn require_both_classes(&self) -> Result<()> {
        let p = self.positives();
        if p == 0 || p == self.len() {
            return Err(Error::Dataset(
                "metric requires at least one positive and one negative".into(),
            ));
        }
        Ok(())
    }

    /// Indices sorted by descending score (stable).
    fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .expect("finite scores")
        });
        order
    }
}

/// Rank-statistic AUC: `(concordant + 0.5 * tied) / (P * N)`, computed in
/// `O(n log n)` via average ranks over tie groups.
pub fn auc(sl: &ScoredLabels) -> Result<f64> {
    sl.require_both_classes()?;
    let n = sl.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sl.scores[a].partial_cmp(&sl.scores[b]).expect("finite"));

    // average rank per tie group, 1-based
    let mut rank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sl.scores[order[j]] == sl.scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            rank[order[k]] = avg;
        }
        i = j;
    }

    let p = sl.positives() as f64;
    let nn = sl.negatives() as f64;
    let rank_sum: f64 = (0..n).filter(|&k| sl.labels[k] == 1).map(|k| rank[k]).sum();
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * nn))
}

/// Average precision with atomic tie groups.
pub fn average_precision(sl: &ScoredLabels) -> Result<f64> {
    let p = sl.positives();
    if p == 0 {
        return Err(Error::Dataset("average precision requires at least one positive".into()));
    }
    let order = sl.descending_order();
    let n = sl.len();
    let mut sum = 0.0f64;
    let mut tp = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut group_pos = 0usize;
        while j < n && sl.scores[order[j]] == sl.scores[order[i]] {
            group_pos += sl.labels[order[j]] as usize;
            j += 1;
        }
        tp += group_pos;
        let precision = tp as f64 / j as f64;
        sum += group_pos as f64 * precision;
        i = j;
    }
    Ok(sum / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdedReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    /// Set when precision hit the 0/0 case and was defined as 0.
    pub precision_degenerate: bool,
}

/// Predicts positive iff `score >= threshold` and fills the confusion counts
/// and derived metrics. `0/0` precision is defined as 0 and flagged.
pub fn thresholded_report(sl: &ScoredLabels, threshold: f64) -> ThresholdedReport {
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (s, l) in sl.scores.iter().zip(&sl.labels) {
        let predicted = *s >= threshold;
        match (predicted, *l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let total = (c.tp + c.fp + c.tn + c.fn_) as f64;
    let accuracy = (c.tp + c.tn) as f64 / total;
    let precision_degenerate = c.tp + c.fp == 0;
    let precision = if precision_degenerate {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ThresholdedReport {
        accuracy,
        precision,
        recall,
        f1,
        threshold,
        counts: c,
        precision_degenerate,
    }
}

/// Complete evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub aupr: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision_degenerate: bool,
}

impl MetricsReport {
    pub fn compute(sl: &ScoredLabels, threshold: f64) -> Result<MetricsReport> {
        let auc = auc(sl)?;
        let aupr = average_precision(sl)?;
        let t = thresholded_report(sl, threshold);
        Ok(MetricsReport {
            auc,
            aupr,
            accuracy: t.accuracy,
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            threshold: t.threshold,
            counts: t.counts,
            precision_degenerate: t.precision_degenerate,
        })
    }

    pub const CSV_HEADER: &'static str =
        "auc,aupr,acc,precision,recall,f1,threshold,tp,fp,tn,fn";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.auc,
            self.aupr,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.threshold,
            self.counts.tp,
            self.counts.fp,
            self.counts.tn,
            self.counts.fn_
        )
    }
}

/// ROC curve as `(fpr, tpr)` points, one per distinct-score cut, including
/// the (0,0) and (1,1) endpoints.
pub fn roc_points(sl: &ScoredLabels) -> Result<Vec<(f64, f64)>> {
    sl.require_both_classes()?;
    let order = sl.descending_order();
    let p = sl.positives() as f64;
    let n = sl.negatives() as f64;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && sl.scores[order[j]] == sl.scores[order[i]] {
            if sl.labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n, tp as f64 / p));
        i = j;
    }
    Ok(points)
}

/// PR curve as `(recall, precision)` points, one per distinct-score cut.
pub fn pr_points(sl: &ScoredLabels) -> Result<Vec<(f64, f64)>> {
    if sl.positives() == 0 {
        return Err(Error::Dataset("PR curve requires at least one positive".into()));
    }
    let order = sl.descending_order();
    let p = sl.positives() as f64;
    let mut points = Vec::new();
    let mut tp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && sl.scores[order[j]] == sl.scores[order[i]] {
            tp += sl.labels[order[j]] as u64;
            j += 1;
        }
        points.push((tp as f64 / p, tp as f64 / j as f64));
        i = j;
    }
    Ok(points)
}

/// Writes `(score, label)` rows, preceded by optional `#` comment lines.
pub fn write_scored_labels(
    sl: &ScoredLabels,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in comments {
        writeln!(w, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    for (s, l) in sl.scores.iter().zip(&sl.labels) {
        writeln!(w, "{s:.12e}\t{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `(score, label)` TSV written by [`write_scored_labels`].
pub fn read_scored_labels(path: impl AsRef<Path>) -> Result<ScoredLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (ix, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (s, l) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, ix + 1, "expected `score<TAB>label`"))?;
        scores.push(
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, ix + 1, format!("bad score: {e}")))?,
        );
        labels.push(
            l.parse::<u8>()
                .map_err(|e| Error::parse(path, ix + 1, format!("bad label: {e}")))?,
        );
    }
    ScoredLabels::new(scores, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(scores: &[f64], labels: &[u8]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn auc_worked_examples() {
        // perfectly ranked
        let s = sl(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        assert_eq!(auc(&s).unwrap(), 1.0);
        // 3 concordant of 4 pairs
        let s = sl(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]);
        assert!((auc(&s).unwrap() - 0.75).abs() < 1e-15);
        // all ties
        let s = sl(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]);
        assert!((auc(&s).unwrap() - 0.5).abs() < 1e-15);
        // single class is an error
        assert!(auc(&sl(&[0.1, 0.2], &[1, 1])).is_err());
    }

    #[test]
    fn average_precision_worked_examples() {
        // perfect ranking: all positives first
        let s = sl(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        assert_eq!(average_precision(&s).unwrap(), 1.0);
        // (1/1 + 2/3) / 2
        let s = sl(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]);
        assert!((average_precision(&s).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        // single positive ranked last among n
        let s = sl(&[0.9, 0.8, 0.7, 0.1], &[0, 0, 0, 1]);
        assert!((average_precision(&s).unwrap() - 0.25).abs() < 1e-15);
        assert!(average_precision(&sl(&[0.5], &[0])).is_err());
    }

    #[test]
    fn brute_force_agreement_with_ties() {
        use crate::seed::rng_from_seed;
        use rand::Rng;
        let mut rng = rng_from_seed(13);
        for _ in 0..300 {
            let n = rng.gen_range(5..120);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                // coarse grid injects plenty of ties
                scores.push((rng.gen_range(0..8) as f64) / 7.0);
                labels.push(rng.gen_range(0..2) as u8);
            }
            if !labels.contains(&1) || !labels.contains(&0) {
                continue;
            }
            let s = sl(&scores, &labels);

            // O(n^2) AUC
            let mut num = 0.0f64;
            let mut pairs = 0.0f64;
            for i in 0..n {
                if labels[i] != 1 {
                    continue;
                }
                for j in 0..n {
                    if labels[j] != 0 {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
            assert!((auc(&s).unwrap() - num / pairs).abs() < 1e-12);

            // per-positive brute-force AP with atomic tie groups
            let mut ap_sum = 0.0f64;
            for i in 0..n {
                if labels[i] != 1 {
                    continue;
                }
                let cut = scores[i];
                let in_cut: Vec<usize> =
                    (0..n).filter(|&k| scores[k] >= cut).collect();
                let tp = in_cut.iter().filter(|&&k| labels[k] == 1).count();
                ap_sum += tp as f64 / in_cut.len() as f64;
            }
            let p = labels.iter().filter(|&&l| l == 1).count() as f64;
            assert!((average_precision(&s).unwrap() - ap_sum / p).abs() < 1e-12);
        }
    }

    #[test]
    fn thresholded_report_examples() {
        // scores equal labels
        let s = sl(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]);
        let r = thresholded_report(&s, 0.5);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 1.0);

        // everything predicted negative with a true positive present
        let s = sl(&[0.1, 0.2, 0.3], &[1, 0, 0]);
        let r = thresholded_report(&s, 0.5);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.precision, 0.0);
        assert!(r.precision_degenerate);
        assert_eq!(r.f1, 0.0);

        // TP=3 FP=1 FN=1 TN=5
        let scores = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
        let r = thresholded_report(&sl(&scores, &labels), 0.5);
        assert_eq!(
            r.counts,
            ConfusionCounts {
                tp: 3,
                fp: 1,
                tn: 5,
                fn_: 1
            }
        );
        assert!((r.precision - 0.75).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.f1 - 0.75).abs() < 1e-15);
        assert!((r.accuracy - 0.8).abs() < 1e-15);
    }

    #[test]
    fn label_reversal_complements_auc() {
        let scores = [0.93, 0.82, 0.7, 0.55, 0.4, 0.21];
        let labels = [1, 0, 1, 1, 0, 0];
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = auc(&sl(&scores, &labels)).unwrap();
        let b = auc(&sl(&scores, &flipped)).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curves_have_expected_endpoints() {
        let s = sl(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]);
        let roc = roc_points(&s).unwrap();
        assert_eq!(*roc.first().unwrap(), (0.0, 0.0));
        assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        let pr = pr_points(&s).unwrap();
        assert_eq!(pr.last().unwrap().0, 1.0);
    }

    #[test]
    fn scored_labels_tsv_round_trip() {
        let s = sl(&[0.25, 0.5, 0.125], &[1, 0, 1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        write_scored_labels(&s, &path, &["config_hash=abc".into()]).unwrap();
        let back = read_scored_labels(&path).unwrap();
        assert_eq!(back.scores(), s.scores());
        assert_eq!(back.labels(), s.labels());
    }
}
