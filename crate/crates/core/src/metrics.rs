//! Binary segmentation metrics.

use crate::error::{Error, Result};
use crate::grid::AnnotationMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Pixel-pooled sum of two tallies.
    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_counts(self)
    }
}

/// Per-pixel tally of `pred` against `gt`.
pub fn confusion(pred: &AnnotationMask, gt: &AnnotationMask) -> Result<ConfusionCounts> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch(
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width(),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Prediction and ground truth are both empty; IoU is 0/0 and the class
    /// is left out of class means.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Zero denominators yield 0.0.
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            iou: ratio(c.tp, c.tp + c.fp + c.fn_),
            precision,
            recall,
            f1,
            degenerate: c.tp + c.fp + c.fn_ == 0,
        }
    }
}

/// Arithmetic mean of per-class IoU values; `None` for an empty list.
pub fn mean_over_classes(ious: &[f64]) -> Option<f64> {
    if ious.is_empty() {
        None
    } else {
        Some(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Mean IoU over the non-degenerate entries of `per_class`.
pub fn mean_iou(per_class: &[Metrics]) -> Option<f64> {
    let ious: alloc::vec::Vec<f64> = per_class
        .iter()
        .filter(|m| !m.degenerate)
        .map(|m| m.iou)
        .collect();
    mean_over_classes(&ious)
}
