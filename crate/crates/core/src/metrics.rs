//! Clustering quality against a ground-truth partition: Rand Index and
//! Normalized Mutual Information.
//!
//! Labels are arbitrary `usize` ids. Both partitions are compacted to dense
//! ids in order of first appearance, so any bijective renaming of either
//! partition produces the same contingency table bit for bit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Errors raised while scoring a partition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("label length mismatch: predicted={predicted}, truth={truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("at least two samples are required, got {0}")]
    TooFewSamples(usize),
}

/// Ground-truth class ids carried alongside a dataset.
///
/// The ids are only readable from this module (and by the CSV writer for
/// round-tripping), which keeps feature learning unsupervised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLabels {
    ids: Vec<usize>,
    class_names: Vec<String>,
}

impl TruthLabels {
    /// `ids[i]` indexes into `class_names`.
    pub fn new(ids: Vec<usize>, class_names: Vec<String>) -> Self {
        debug_assert!(ids.iter().all(|&id| id < class_names.len()));
        Self { ids, class_names }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Restrict to the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub(crate) fn class_name_of(&self, row: usize) -> &str {
        &self.class_names[self.ids[row]]
    }
}

/// Rand Index and NMI of a predicted partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rand_index: f64,
    pub nmi: f64,
}

/// Score `pred` against the dataset's truth labels.
pub fn score(pred: &[usize], truth: &TruthLabels) -> Result<Scores, MetricsError> {
    Ok(Scores {
        rand_index: rand_index(pred, &truth.ids)?,
        nmi: nmi(pred, &truth.ids)?,
    })
}

/// Pair counts over all unordered sample pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    /// Same truth class and same predicted cluster.
    pub tp: u64,
    /// Different truth class and different predicted cluster.
    pub tn: u64,
    /// Same predicted cluster, different truth class.
    pub fp: u64,
    /// Same truth class, different predicted cluster.
    pub fn_: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Agreement counts between a predicted partition (rows) and the truth
/// (columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    /// `counts[j][j']`: samples in predicted cluster `j` and true class `j'`.
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl Contingency {
    pub fn build(pred: &[usize], truth: &[usize]) -> Result<Self, MetricsError> {
        check_lengths(pred, truth)?;
        let pred = compact(pred);
        let truth = compact(truth);
        let k = pred.iter().max().map_or(0, |m| m + 1);
        let k_star = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; k_star]; k];
        for (&p, &t) in pred.iter().zip(&truth) {
            counts[p][t] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..k_star)
            .map(|c| counts.iter().map(|row| row[c]).sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: pred.len() as u64,
        })
    }
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<usize, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewSamples(pred.len()));
    }
    Ok(pred.len())
}

/// Relabel to `0..k` in order of first appearance.
fn compact(labels: &[usize]) -> Vec<usize> {
    let mut seen = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(*l).or_insert(next)
        })
        .collect()
}

fn choose2(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Pair counts from the contingency table in `O(n + k·k*)`.
pub fn pair_counts(pred: &[usize], truth: &[usize]) -> Result<PairCounts, MetricsError> {
    let table = Contingency::build(pred, truth)?;
    let tp: u64 = table.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let same_pred: u64 = table.row_sums.iter().map(|&c| choose2(c)).sum();
    let same_truth: u64 = table.col_sums.iter().map(|&c| choose2(c)).sum();
    let fp = same_pred - tp;
    let fn_ = same_truth - tp;
    let tn = choose2(table.total) - tp - fp - fn_;
    Ok(PairCounts { tp, tn, fp, fn_ })
}

/// Reference pair counts by enumerating every unordered pair.
pub fn pair_counts_exhaustive(pred: &[usize], truth: &[usize]) -> Result<PairCounts, MetricsError> {
    let n = check_lengths(pred, truth)?;
    let mut counts = PairCounts::default();
    for i in 0..n {
        for j in (i + 1)..n {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => counts.tp += 1,
                (false, false) => counts.tn += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
            }
        }
    }
    Ok(counts)
}

/// `(TP + TN) / (TP + FP + FN + TN)`.
pub fn rand_index(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    let c = pair_counts(pred, truth)?;
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Sum after sorting so the result does not depend on the order in which the
/// terms were produced (keeps NMI exactly symmetric under argument swap).
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Normalized mutual information with geometric-mean normalisation and
/// natural logarithms. A partition with a single cluster has zero entropy;
/// NMI is then defined as 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    let table = Contingency::build(pred, truth)?;
    let n = table.total as f64;

    let mut mi_terms = Vec::new();
    for (j, row) in table.counts.iter().enumerate() {
        for (jp, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let denom = table.row_sums[j] as f64 * table.col_sums[jp] as f64;
            mi_terms.push(c * (n * c / denom).ln());
        }
    }
    let entropy = |margins: &[u64]| {
        ordered_sum(
            margins
                .iter()
                .filter(|&&m| m > 0)
                .map(|&m| {
                    let m = m as f64;
                    m * (n / m).ln()
                })
                .collect(),
        )
    };
    let h_pred = entropy(&table.row_sums);
    let h_truth = entropy(&table.col_sums);
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mi = ordered_sum(mi_terms);
    Ok((mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_pair_counts() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 1, 1];
        let c = pair_counts(&pred, &truth).unwrap();
        assert_eq!(
            c,
            PairCounts {
                tp: 1,
                tn: 2,
                fp: 2,
                fn_: 1
            }
        );
        assert_eq!(rand_index(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn single_pairs() {
        let same = pair_counts(&[3, 3], &[1, 1]).unwrap();
        assert_eq!(
            same,
            PairCounts {
                tp: 1,
                ..Default::default()
            }
        );
        let split = pair_counts(&[0, 1], &[5, 5]).unwrap();
        assert_eq!(
            split,
            PairCounts {
                fn_: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn perfect_and_renamed_partitions() {
        let truth = [0, 0, 1, 2, 2, 1];
        let renamed = [7, 7, 3, 9, 9, 3];
        assert_eq!(rand_index(&truth, &truth).unwrap(), 1.0);
        assert_eq!(rand_index(&renamed, &truth).unwrap(), 1.0);
        assert!((nmi(&renamed, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_degenerate_and_independent() {
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            rand_index(&[0, 1], &[0]),
            Err(MetricsError::LengthMismatch {
                predicted: 2,
                truth: 1
            })
        );
        assert_eq!(rand_index(&[0], &[0]), Err(MetricsError::TooFewSamples(1)));
        assert!(nmi(&[0, 1, 2], &[0, 1]).is_err());
    }

    #[test]
    fn truth_label_selection() {
        let t = TruthLabels::new(vec![0, 1, 1, 0], vec!["a".into(), "b".into()]);
        let s = t.select(&[3, 1]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.class_name_of(0), "a");
        assert_eq!(s.class_name_of(1), "b");
        let scores = score(&[0, 1, 1, 0], &t).unwrap();
        assert_eq!(scores.rand_index, 1.0);
    }
}
