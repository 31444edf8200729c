//! Metrics, cross-validation and learning curves.

mod cv;
mod dataset;
mod metrics;

use std::io::Write;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::models::ModelError;
use crate::pipeline::PipelineError;

pub use cv::{
    cross_validate, evaluate_articles, learning_curve, ArticleEvaluation, CurvePoint, CvResult, Learner, ModelLearner,
};
pub use dataset::{dataset_learning_curve, evaluate_dataset, DatasetEvaluation};
pub use metrics::{classification_report, recall_at_k, recall_curve, ClassificationReport, RecallCurve, RecallMode};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("K = {k} is outside 1..={len}")]
    KOutOfRange { k: usize, len: usize },
    #[error("no gold label for article {0}")]
    MissingGold(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::LengthMismatch { .. } => "length_mismatch",
            EvalError::KOutOfRange { .. } => "k_out_of_range",
            EvalError::MissingGold(_) => "missing_gold",
            EvalError::InvalidArgument(_) => "invalid_argument",
            EvalError::Corpus(e) => e.code(),
            EvalError::Model(e) => e.code(),
            EvalError::Pipeline(e) => e.code(),
            EvalError::Io(_) => "io",
        }
    }
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Io(e.into())
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// `model,fold,precision,recall,f1` rows, folds numbered from 1, then an
/// `aggregate` row. `micro_alias` renames the metric columns to the
/// `micro_*` names some published tables use for the same numbers.
pub fn write_report_csv<W: Write>(
    rows: &[(&str, &[ClassificationReport], &ClassificationReport)],
    out: W,
    micro_alias: bool,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = if micro_alias {
        &["model", "fold", "micro_precision", "micro_recall", "micro_f1"]
    } else {
        &["model", "fold", "precision", "recall", "f1"]
    };
    w.write_record(header).map_err(csv_err)?;
    for (model, folds, aggregate) in rows {
        for (i, r) in folds.iter().enumerate() {
            w.write_record([model.to_string(), (i + 1).to_string(), fmt(r.precision), fmt(r.recall), fmt(r.f1)])
                .map_err(csv_err)?;
        }
        w.write_record([model.to_string(), "aggregate".into(), fmt(aggregate.precision), fmt(aggregate.recall), fmt(aggregate.f1)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_recall_csv<W: Write>(curve: &RecallCurve, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K", "recall"]).map_err(csv_err)?;
    for (k, r) in &curve.points {
        w.write_record([k.to_string(), fmt(*r)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `fraction,f1`; invalid points leave the f1 field empty.
pub fn write_learning_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fraction", "f1"]).map_err(csv_err)?;
    for p in points {
        let f1 = p.report.map(|r| fmt(r.f1)).unwrap_or_default();
        w.write_record([format!("{}", p.fraction), f1]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_csv_layout() {
        let a = ClassificationReport::from_counts(3, 1, 2, 4);
        let b = ClassificationReport::from_counts(1, 0, 0, 1);
        let agg = a.merge(&b);
        let mut buf = Vec::new();
        write_report_csv(&[("lr", &[a, b][..], &agg)], &mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "model,fold,precision,recall,f1");
        assert_eq!(lines[1], "lr,1,0.750000,0.600000,0.666667");
        assert_eq!(lines[3], "lr,aggregate,0.800000,0.666667,0.727273");
        let mut buf = Vec::new();
        write_report_csv(&[("lr", &[][..], &agg)], &mut buf, true).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("model,fold,micro_precision,micro_recall,micro_f1\n"));
    }

    #[test]
    fn curve_csv_layouts() {
        let curve = RecallCurve {
            mode: RecallMode::Positives,
            points: vec![(1, 0.5), (2, 1.0)],
        };
        let mut buf = Vec::new();
        write_recall_csv(&curve, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "K,recall\n1,0.500000\n2,1.000000\n");
        let pts = [
            CurvePoint {
                fraction: 0.1,
                report: None,
            },
            CurvePoint {
                fraction: 1.0,
                report: Some(ClassificationReport::from_counts(1, 0, 0, 1)),
            },
        ];
        let mut buf = Vec::new();
        write_learning_curve_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fraction,f1\n0.1,\n1,1.000000\n");
    }
}
