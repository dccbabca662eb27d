use serde::{Deserialize, Serialize};

use crate::diffcore::DenseMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Unweighted mean of per-class F1; a class never predicted and never
    /// present counts as 0.
    pub macro_f1: f64,
    /// Summed cross-entropy over the evaluated nodes.
    pub loss: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &DenseMatrix, nodes: &[usize]) -> Vec<usize> {
    nodes
        .iter()
        .map(|&n| {
            let row = logits.row(n);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn compute_metrics(predicted: &[usize], truth: &[usize], num_classes: usize, loss: f64) -> Result<Metrics> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("metrics need equally long, non-empty prediction and truth lists"));
    }
    if let Some(&c) = predicted.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::invalid(format!("class {c} out of range")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], true_count[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: true_count[c],
            }
        })
        .collect();
    Ok(Metrics {
        accuracy: tp.iter().sum::<usize>() as f64 / predicted.len() as f64,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / num_classes as f64,
        loss,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3, 0.0).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let m = compute_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2, 0.0).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[0].precision, 0.5);
        assert_eq!(m.per_class[0].recall, 1.0);
        assert_eq!(m.per_class[1].f1, 0.0);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let m = compute_metrics(&[0, 1], &[0, 1], 3, 0.0).unwrap();
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(compute_metrics(&[], &[], 2, 0.0).is_err());
        assert!(compute_metrics(&[2], &[0], 2, 0.0).is_err());
    }

    #[test]
    fn argmax_ties_take_first() {
        let logits = array![[1.0, 3.0, 3.0], [0.0, 0.0, 0.0], [5.0, -1.0, 2.0]];
        assert_eq!(predict(&logits, &[0, 1, 2]), vec![1, 0, 0]);
        assert_eq!(predict(&logits, &[2]), vec![0]);
    }
}
