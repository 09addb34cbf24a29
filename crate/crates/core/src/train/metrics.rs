use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const F1_THRESHOLD: f64 = 0.1;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Metric("no nodes to evaluate".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Thresholded predictions: the argmax class when its probability reaches
/// `tau`, otherwise no prediction.
pub fn thresholded_predictions(probs: &Tensor, tau: f64) -> Vec<Option<usize>> {
    (0..probs.rows())
        .map(|i| {
            let row = probs.row(i);
            let c = argmax(row);
            (row[c] >= tau).then_some(c)
        })
        .collect()
}

/// Per-class precision, recall and F1 of optional predictions. A missing
/// prediction counts only as a false negative for the true class.
pub fn class_stats(predictions: &[Option<usize>], labels: &[usize], num_classes: usize) -> Vec<ClassStats> {
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (p, &l) in predictions.iter().zip(labels) {
        support[l] += 1;
        if let Some(p) = *p {
            predicted[p] += 1;
            if p == l {
                tp[l] += 1;
            }
        }
    }
    (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = ratio(2 * tp[c], predicted[c] + support[c]);
            ClassStats {
                class: c,
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect()
}

/// Macro F1 over classes with nonzero support.
pub fn macro_f1(stats: &[ClassStats]) -> f64 {
    let present: Vec<f64> = stats.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// F1 at probability threshold `tau`, macro-averaged over present classes.
pub fn f1_at_threshold(probs: &Tensor, labels: &[usize], tau: f64) -> f64 {
    let preds = thresholded_predictions(probs, tau);
    macro_f1(&class_stats(&preds, labels, probs.cols()))
}
