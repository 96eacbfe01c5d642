//! Confusion matrices, one-vs-rest per-class metrics and support-weighted
//! aggregates.
//!
//! Per class `i` the matrix is collapsed to `TP/FP/FN/TN` by treating `i`
//! as the positive class. Weighted aggregates multiply each per-class value
//! by `W_i = N_i / Σ N`, where `N_i` is the number of true instances of `i`.
//! The weighted F1 is the weighted mean of per-class F1 values, not the F1
//! of the weighted precision and recall.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::data_lines;

/// Interaction groups used when collapsing fine DDI classes.
pub const GROUP_NAMES: [&str; 6] = [
    "Absorption",
    "Distribution",
    "Metabolism",
    "Excretion",
    "Toxicity",
    "Effects",
];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class {class} outside 0..={max}")]
    ClassOutOfRange { class: usize, max: usize },
    #[error("confusion matrix has no true instances to weight")]
    Empty,
    #[error("class {0} has no group")]
    MissingGroup(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Square count matrix; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Empty matrix over classes `0..=class_count`.
    pub fn new(class_count: usize) -> Self {
        let n = class_count + 1;
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(MetricsError::Format {
                line: 0,
                message: format!("row of length {} in a {n}-class matrix", bad.len()),
            });
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    /// Number of classes, including class 0.
    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        for c in [truth, pred] {
            if c >= self.n {
                return Err(MetricsError::ClassOutOfRange {
                    class: c,
                    max: self.n - 1,
                });
            }
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n..(truth + 1) * self.n]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, pred)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Plain fraction of correct predictions.
    pub fn micro_accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// One-vs-rest counts for class `i`.
    pub fn one_vs_rest(&self, i: usize) -> OneVsRest {
        let tp = self.get(i, i);
        let fp = self.col_sum(i) - tp;
        let fn_ = self.row_sum(i) - tp;
        let tn = self.total() - tp - fp - fn_;
        OneVsRest { tp, fp, fn_, tn }
    }

    /// Sums cells into group classes; class 0 stays 0.
    pub fn aggregate(&self, grouping: &ClassGrouping) -> Result<ConfusionMatrix, MetricsError> {
        let map: Vec<usize> = (0..self.n).map(|c| grouping.group_of(c)).collect::<Result<_, _>>()?;
        let mut out = ConfusionMatrix::new(grouping.group_count());
        for t in 0..self.n {
            for p in 0..self.n {
                out.counts[map[t] * out.n + map[p]] += self.get(t, p);
            }
        }
        Ok(out)
    }
}

/// Tallies `counts[label][pred]` over classes `0..=class_count`.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], class_count: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(class_count);
    for (&p, &t) in preds.iter().zip(labels) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl OneVsRest {
    /// Accuracy, precision, recall and F1 from the four counts. Empty
    /// denominators give 0, except accuracy of an empty matrix, which is 1.
    pub fn scores(&self) -> ClassScores {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let all = self.tp + self.tn + self.fp + self.fn_;
        let accuracy = if all == 0 { 1.0 } else { ratio(self.tp + self.tn, all) };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            accuracy,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn per_class_metrics(cm: &ConfusionMatrix, class: usize) -> ClassScores {
    cm.one_vs_rest(class).scores()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    #[serde(flatten)]
    pub counts: OneVsRest,
    #[serde(flatten)]
    pub scores: ClassScores,
    pub support: u64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassReport>,
    pub weighted: ClassScores,
    /// `trace / total`, reported next to the weighted one-vs-rest accuracy.
    pub micro_accuracy: f64,
    pub total: u64,
    pub class0_excluded: bool,
}

/// Support-weighted aggregates. With `exclude_class0`, class 0 gets weight
/// 0 and the remaining weights are renormalized over classes `1..`.
pub fn weighted_metrics(cm: &ConfusionMatrix, exclude_class0: bool) -> Result<MetricReport, MetricsError> {
    let first = usize::from(exclude_class0);
    let supports: Vec<u64> = (0..cm.n_classes()).map(|i| cm.row_sum(i)).collect();
    let denom: u64 = supports[first.min(supports.len())..].iter().sum();
    if denom == 0 {
        return Err(MetricsError::Empty);
    }
    let mut weighted = ClassScores::default();
    let mut per_class = Vec::with_capacity(cm.n_classes());
    for (i, &support) in supports.iter().enumerate() {
        let counts = cm.one_vs_rest(i);
        let scores = counts.scores();
        let weight = if i < first { 0.0 } else { support as f64 / denom as f64 };
        weighted.accuracy += weight * scores.accuracy;
        weighted.precision += weight * scores.precision;
        weighted.recall += weight * scores.recall;
        weighted.f1 += weight * scores.f1;
        per_class.push(ClassReport {
            class: i,
            counts,
            scores,
            support,
            weight,
        });
    }
    Ok(MetricReport {
        per_class,
        weighted,
        micro_accuracy: cm.micro_accuracy(),
        total: cm.total(),
        class0_excluded: exclude_class0,
    })
}

/// Map from fine DDI class to group id; class 0 always maps to 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGrouping {
    map: BTreeMap<usize, usize>,
}

impl ClassGrouping {
    pub fn new(map: BTreeMap<usize, usize>) -> Self {
        Self { map }
    }

    pub fn identity(class_count: usize) -> Self {
        Self {
            map: (1..=class_count).map(|c| (c, c)).collect(),
        }
    }

    pub fn group_of(&self, class: usize) -> Result<usize, MetricsError> {
        if class == 0 {
            return Ok(0);
        }
        self.map.get(&class).copied().ok_or(MetricsError::MissingGroup(class))
    }

    pub fn group_count(&self) -> usize {
        self.map.values().copied().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Checks that every class `1..=class_count` has a group.
    pub fn check_total(&self, class_count: usize) -> Result<(), MetricsError> {
        (1..=class_count).try_for_each(|c| self.group_of(c).map(|_| ()))
    }

    /// Parses `fine_class<TAB>group_id` lines.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut map = BTreeMap::new();
        for line in data_lines(reader) {
            let (no, line) = line.map_err(|e| MetricsError::Format {
                line: 0,
                message: e.to_string(),
            })?;
            let format = |message: String| MetricsError::Format { line: no, message };
            let (fine, group) = line
                .split_once('\t')
                .ok_or_else(|| format("expected `fine_class<TAB>group_id`".into()))?;
            let fine: usize = fine.trim().parse().map_err(|_| format(format!("bad class `{fine}`")))?;
            let group: usize = group.trim().parse().map_err(|_| format(format!("bad group `{group}`")))?;
            if fine == 0 || group == 0 {
                return Err(format("class 0 is reserved for no interaction".into()));
            }
            if map.insert(fine, group).is_some_and(|prev| prev != group) {
                return Err(format(format!("class {fine} assigned to two groups")));
            }
        }
        Ok(Self { map })
    }
}

/// Maps fine labels to group labels elementwise.
pub fn group_classes(labels: &[usize], grouping: &ClassGrouping) -> Result<Vec<usize>, MetricsError> {
    labels.iter().map(|&c| grouping.group_of(c)).collect()
}

/// `confusion.tsv`: a header of predicted ids, then one row per true class
/// led by its id.
pub fn write_confusion<W: Write>(mut w: W, cm: &ConfusionMatrix) -> std::io::Result<()> {
    let header: Vec<String> = (0..cm.n_classes()).map(|c| c.to_string()).collect();
    writeln!(w, "true\\pred\t{}", header.join("\t"))?;
    for t in 0..cm.n_classes() {
        let row: Vec<String> = cm.row(t).iter().map(|c| c.to_string()).collect();
        writeln!(w, "{t}\t{}", row.join("\t"))?;
    }
    Ok(())
}

pub fn read_confusion<R: BufRead>(reader: R) -> Result<ConfusionMatrix, MetricsError> {
    let mut rows = Vec::new();
    for (k, line) in data_lines(reader).enumerate() {
        let (no, line) = line.map_err(|e| MetricsError::Format {
            line: 0,
            message: e.to_string(),
        })?;
        if k == 0 {
            continue;
        }
        let counts = line
            .split('\t')
            .skip(1)
            .map(|v| v.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MetricsError::Format {
                line: no,
                message: e.to_string(),
            })?;
        rows.push(counts);
    }
    ConfusionMatrix::from_counts(&rows)
}
