use std::collections::HashMap;

use super::{cross_validate, evaluate_articles, learning_curve, ArticleEvaluation, CurvePoint, CvResult, EvalError, ModelLearner};
use crate::corpus::Dataset;
use crate::features::FeatureSpace;
use crate::models::TrainConfig;
use crate::pipeline::training_set;
use crate::Scalar;

/// Post-level cross-validation plus the article queue built from the
/// out-of-fold probabilities.
#[derive(Clone, Debug)]
pub struct DatasetEvaluation<F> {
    pub cv: CvResult<F>,
    /// Trainable post ids, aligned with `cv.probabilities`.
    pub post_ids: Vec<String>,
    pub articles: ArticleEvaluation<F>,
}

/// Cross-validates `cfg.kind` over the trainable posts, seeding the folds
/// with `cfg.seed`.
pub fn evaluate_dataset<F: Scalar>(
    dataset: &Dataset,
    space: &FeatureSpace<F>,
    cfg: &TrainConfig,
    k: usize,
) -> Result<DatasetEvaluation<F>, EvalError> {
    let set = training_set(dataset, space);
    let learner = ModelLearner {
        space,
        inputs: &set.inputs,
        labels: &set.labels,
        config: cfg.clone(),
    };
    let cv = cross_validate(&learner, &set.labels, k, cfg.seed)?;
    let probs: HashMap<String, F> = set.post_ids.iter().cloned().zip(cv.probabilities.iter().copied()).collect();
    let articles = evaluate_articles(dataset, &probs)?;
    Ok(DatasetEvaluation {
        cv,
        post_ids: set.post_ids,
        articles,
    })
}

pub fn dataset_learning_curve<F: Scalar>(
    dataset: &Dataset,
    space: &FeatureSpace<F>,
    cfg: &TrainConfig,
    k: usize,
    fractions: &[f64],
) -> Result<Vec<CurvePoint>, EvalError> {
    let set = training_set(dataset, space);
    let learner = ModelLearner {
        space,
        inputs: &set.inputs,
        labels: &set.labels,
        config: cfg.clone(),
    };
    learning_curve(&learner, &set.labels, k, cfg.seed, fractions)
}
