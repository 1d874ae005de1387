//! Thresholding and F1 scores.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Zip};

use crate::domain::{ScoreMatrix, ThresholdVector};
use crate::error::{Error, Result};

/// Pooled confusion counts. F1 values built from counts compare exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl std::ops::Add for F1Counts {
    type Output = F1Counts;

    fn add(self, other: F1Counts) -> F1Counts {
        F1Counts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

impl std::ops::Sub for F1Counts {
    type Output = F1Counts;

    fn sub(self, other: F1Counts) -> F1Counts {
        F1Counts {
            tp: self.tp - other.tp,
            fp: self.fp - other.fp,
            fn_: self.fn_ - other.fn_,
        }
    }
}

impl F1Counts {
    fn ratio(&self) -> (u128, u128) {
        let num = 2 * self.tp as u128;
        (num, num + self.fp as u128 + self.fn_ as u128)
    }

    /// `2TP / (2TP + FP + FN)`, or 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        let (num, den) = self.ratio();
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// Exact rational comparison of the two F1 values.
    pub fn cmp_f1(&self, other: &F1Counts) -> Ordering {
        let (a_num, a_den) = self.ratio();
        let (b_num, b_den) = other.ratio();
        // 0/0 is defined as 0
        let (a_num, a_den) = if a_den == 0 { (0, 1) } else { (a_num, a_den) };
        let (b_num, b_den) = if b_den == 0 { (0, 1) } else { (b_num, b_den) };
        (a_num * b_den).cmp(&(b_num * a_den))
    }

    pub fn from_pairs(pred: impl IntoIterator<Item = (bool, bool)>) -> F1Counts {
        pred.into_iter()
            .fold(F1Counts::default(), |mut acc, (p, t)| {
                match (p, t) {
                    (true, true) => acc.tp += 1,
                    (true, false) => acc.fp += 1,
                    (false, true) => acc.fn_ += 1,
                    (false, false) => {}
                }
                acc
            })
    }
}

/// `decision[i][k] = scores[i][k] >= th[k]`.
pub fn apply_thresholds(scores: &ScoreMatrix, th: &ThresholdVector) -> Result<Array2<bool>> {
    if scores.n_events() != th.len() {
        return Err(Error::Dimension(format!(
            "{} score columns but {} thresholds",
            scores.n_events(),
            th.len()
        )));
    }
    let t = th.as_slice();
    Ok(Array2::from_shape_fn(scores.values().dim(), |(i, k)| {
        scores.values()[[i, k]] >= t[k]
    }))
}

pub fn class_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "prediction length {} vs truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(F1Counts::from_pairs(pred.iter().copied().zip(truth.iter().copied())).f1())
}

pub fn micro_counts(pred: ArrayView2<'_, bool>, truth: ArrayView2<'_, bool>) -> Result<F1Counts> {
    if pred.dim() != truth.dim() {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} vs truth shape {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let mut counts = F1Counts::default();
    Zip::from(pred).and(truth).for_each(|&p, &t| {
        counts = counts + F1Counts::from_pairs([(p, t)]);
    });
    Ok(counts)
}

/// Micro-averaged F1: counts pooled over every (clip, event) cell.
pub fn micro_f1(pred: ArrayView2<'_, bool>, truth: ArrayView2<'_, bool>) -> Result<f64> {
    micro_counts(pred, truth).map(|c| c.f1())
}

/// Per-event F1 for each column.
pub fn per_class_f1(pred: ArrayView2<'_, bool>, truth: ArrayView2<'_, bool>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} vs truth shape {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    Ok(pred
        .columns()
        .into_iter()
        .zip(truth.columns())
        .map(|(p, t)| F1Counts::from_pairs(p.iter().copied().zip(t.iter().copied())).f1())
        .collect())
}
