use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::pipeline::RankedQueue;
use crate::Scalar;

/// Positive-class precision, recall and F1 with the confusion counts behind
/// them. Undefined ratios are reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassificationReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassificationReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// Pools the counts of two reports.
    pub fn merge(&self, other: &ClassificationReport) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_, self.tn + other.tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn classification_report(predictions: &[bool], golds: &[bool]) -> Result<ClassificationReport, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ClassificationReport::from_counts(tp, fp, fn_, tn))
}

/// Denominator of Recall@K.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// Number of gold-suspicious articles in the queue.
    #[default]
    Positives,
    /// Number of articles in the queue.
    Total,
}

impl FromStr for RecallMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "positives" => Ok(RecallMode::Positives),
            "total" => Ok(RecallMode::Total),
            other => Err(EvalError::InvalidArgument(format!(
                "unknown recall mode {other:?}; expected positives or total"
            ))),
        }
    }
}

fn gold_flags<F: Scalar>(queue: &RankedQueue<F>, golds: &HashMap<String, bool>) -> Result<Vec<bool>, EvalError> {
    queue
        .iter()
        .map(|a| golds.get(&a.url).copied().ok_or_else(|| EvalError::MissingGold(a.url.clone())))
        .collect()
}

fn normalizer(flags: &[bool], mode: RecallMode) -> usize {
    match mode {
        RecallMode::Positives => flags.iter().filter(|&&g| g).count(),
        RecallMode::Total => flags.len(),
    }
}

/// Gold-suspicious articles among the top `k`, divided by the mode's
/// normalizer (0 when the normalizer is 0).
pub fn recall_at_k<F: Scalar>(
    queue: &RankedQueue<F>,
    golds: &HashMap<String, bool>,
    k: usize,
    mode: RecallMode,
) -> Result<f64, EvalError> {
    if k == 0 || k > queue.len() {
        return Err(EvalError::KOutOfRange { k, len: queue.len() });
    }
    let flags = gold_flags(queue, golds)?;
    let hits = flags[..k].iter().filter(|&&g| g).count();
    let norm = normalizer(&flags, mode);
    Ok(if norm == 0 { 0.0 } else { hits as f64 / norm as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub mode: RecallMode,
    /// `(K, recall@K)` for K = 1..=|queue|.
    pub points: Vec<(usize, f64)>,
}

impl RecallCurve {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.points.get(k.checked_sub(1)?).map(|p| p.1)
    }
}

pub fn recall_curve<F: Scalar>(
    queue: &RankedQueue<F>,
    golds: &HashMap<String, bool>,
    mode: RecallMode,
) -> Result<RecallCurve, EvalError> {
    let flags = gold_flags(queue, golds)?;
    let norm = normalizer(&flags, mode);
    let mut hits = 0;
    let points = flags
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            hits += usize::from(g);
            (i + 1, if norm == 0 { 0.0 } else { hits as f64 / norm as f64 })
        })
        .collect();
    Ok(RecallCurve { mode, points })
}
