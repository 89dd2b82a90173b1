//! Classification scores, silhouette, and topic coherence.

mod coherence;
mod silhouette;

pub use coherence::{cv_coherence, umass_coherence, CooccurrenceStats, DEFAULT_TOP_N, DEFAULT_WINDOW};
pub use silhouette::{silhouette, silhouette_samples};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Square confusion matrix, rows indexed by true class and columns by
/// predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    n_classes: usize,
    matrix: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(n_classes: usize) -> Self {
        ConfusionCounts {
            n_classes,
            matrix: vec![0; n_classes * n_classes],
        }
    }

    /// Two-class counts; class 1 is the positive class.
    pub fn binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts {
            n_classes: 2,
            matrix: vec![tn, fp, fn_, tp],
        }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.add(t, p)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for class in [truth, predicted] {
            if class >= self.n_classes {
                return Err(Error::IndexOutOfRange {
                    index: class,
                    len: self.n_classes,
                });
            }
        }
        self.matrix[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.matrix[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn tp(&self, class: usize) -> u64 {
        self.get(class, class)
    }

    pub fn fp(&self, class: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&t| t != class)
            .map(|t| self.get(t, class))
            .sum()
    }

    pub fn fn_(&self, class: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&p| p != class)
            .map(|p| self.get(class, p))
            .sum()
    }

    pub fn tn(&self, class: usize) -> u64 {
        self.total() - self.tp(class) - self.fp(class) - self.fn_(class)
    }

    /// Number of examples whose true class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(class, p)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.matrix.chunks(self.n_classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

pub fn precision(c: &ConfusionCounts, class: usize) -> f64 {
    let denom = c.tp(class) + c.fp(class);
    if denom == 0 {
        0.0
    } else {
        c.tp(class) as f64 / denom as f64
    }
}

pub fn recall(c: &ConfusionCounts, class: usize) -> f64 {
    let denom = c.tp(class) + c.fn_(class);
    if denom == 0 {
        0.0
    } else {
        c.tp(class) as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall; 0 when either is undefined.
pub fn f1_score(c: &ConfusionCounts, class: usize) -> f64 {
    let tp = c.tp(class);
    if tp + c.fp(class) == 0 || tp + c.fn_(class) == 0 {
        return 0.0;
    }
    let p = precision(c, class);
    let r = recall(c, class);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(c: &ConfusionCounts) -> f64 {
    let total = c.total();
    if total == 0 {
        return 0.0;
    }
    (0..c.n_classes())
        .map(|k| c.support(k) as f64 * f1_score(c, k))
        .sum::<f64>()
        / total as f64
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidParameter("accuracy of zero examples".into()));
    }
    Ok(c.correct() as f64 / total as f64)
}

/// Per-class recall: the share of each true class predicted correctly.
/// Classes absent from `labels` get no entry.
pub fn per_class_accuracy<T: Ord + Clone>(labels: &[T], predictions: &[T]) -> Result<BTreeMap<T, f64>> {
    if labels.len() != predictions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut tally: BTreeMap<T, (u64, u64)> = BTreeMap::new();
    for (t, p) in labels.iter().zip(predictions) {
        let e = tally.entry(t.clone()).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(k, (hit, n))| (k, hit as f64 / n as f64))
        .collect())
}
