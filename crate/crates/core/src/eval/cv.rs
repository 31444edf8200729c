use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{classification_report, ClassificationReport, EvalError};
use crate::corpus::{stratified_folds, stratified_subsample, Dataset};
use crate::features::{Encoded, FeatureSpace};
use crate::models::{fit, TrainConfig, TrainedModel};
use crate::num::derive_seed;
use crate::pipeline::{rank_articles, score_articles, RankedQueue, ScoredPost};
use crate::Scalar;

/// Something that can be trained on a subset of numbered examples and then
/// score any example.
pub trait Learner<F: Scalar> {
    type Model;

    fn name(&self) -> String;

    /// `dev` is for early stopping only; it never overlaps `train`.
    fn fit(&self, train: &[usize], dev: &[usize], seed: u64) -> Result<Self::Model, EvalError>;

    fn predict(&self, model: &Self::Model, unit: usize) -> Result<F, EvalError>;
}

/// One of the five classifiers over pre-encoded posts.
pub struct ModelLearner<'a, F> {
    pub space: &'a FeatureSpace<F>,
    pub inputs: &'a [Encoded<F>],
    pub labels: &'a [bool],
    pub config: TrainConfig,
}

impl<F: Scalar> Learner<F> for ModelLearner<'_, F> {
    type Model = TrainedModel<F>;

    fn name(&self) -> String {
        self.config.kind.to_string()
    }

    fn fit(&self, train: &[usize], dev: &[usize], seed: u64) -> Result<TrainedModel<F>, EvalError> {
        let pick = |idx: &[usize]| -> (Vec<&Encoded<F>>, Vec<bool>) {
            (idx.iter().map(|&i| &self.inputs[i]).collect(), idx.iter().map(|&i| self.labels[i]).collect())
        };
        let (tx, ty) = pick(train);
        let (dx, dy) = pick(dev);
        let cfg = TrainConfig {
            seed,
            ..self.config.clone()
        };
        Ok(fit(&tx, &ty, Some((&dx, &dy)), self.space, &cfg)?)
    }

    fn predict(&self, model: &TrainedModel<F>, unit: usize) -> Result<F, EvalError> {
        Ok(model.predict_proba(&self.inputs[unit])?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CvResult<F> {
    pub model: String,
    pub seed: u64,
    pub k: usize,
    /// Test-fold reports in fold order.
    pub folds: Vec<ClassificationReport>,
    /// Counts pooled over all test folds.
    pub aggregate: ClassificationReport,
    /// Out-of-fold probability for every example.
    pub probabilities: Vec<F>,
    pub fold_of: Vec<usize>,
}

const FOLD_STREAM: u64 = 0x666f_6c64;
const SUBSAMPLE_STREAM: u64 = 0x7375_6273;

/// Runs the k-fold rotation with the training part of every fold cut to
/// `fraction`. `None` when some reduced training part holds one class.
fn run_folds<F: Scalar, L: Learner<F>>(
    learner: &L,
    labels: &[bool],
    k: usize,
    seed: u64,
    fraction: f64,
) -> Result<Option<CvResult<F>>, EvalError> {
    let folds = stratified_folds(labels, k, seed)?;
    let mut probabilities = vec![F::zero(); labels.len()];
    let mut reports = Vec::with_capacity(k);
    for f in 0..k {
        let test = folds.members(f);
        let dev_fold = (f + 1) % k;
        let dev = folds.members(dev_fold);
        let rest: Vec<usize> = (0..k).filter(|&g| g != f && g != dev_fold).collect();
        let mut train = folds.members_of(&rest);
        if fraction < 1.0 {
            train = stratified_subsample(&train, labels, fraction, derive_seed(seed, SUBSAMPLE_STREAM, f as u64));
        }
        let positives = train.iter().filter(|&&i| labels[i]).count();
        if positives == 0 || positives == train.len() {
            return Ok(None);
        }
        log::info!("fold {}/{k}: {} train, {} dev, {} test", f + 1, train.len(), dev.len(), test.len());
        let model = learner.fit(&train, &dev, derive_seed(seed, FOLD_STREAM, f as u64))?;
        let mut preds = Vec::with_capacity(test.len());
        let mut golds = Vec::with_capacity(test.len());
        for &i in &test {
            let p = learner.predict(&model, i)?;
            probabilities[i] = p;
            preds.push(p > F::of(0.5));
            golds.push(labels[i]);
        }
        reports.push(classification_report(&preds, &golds)?);
    }
    let aggregate = reports.iter().fold(ClassificationReport::default(), |acc, r| acc.merge(r));
    Ok(Some(CvResult {
        model: learner.name(),
        seed,
        k,
        folds: reports,
        aggregate,
        probabilities,
        fold_of: (0..labels.len()).map(|i| folds.fold_of(i)).collect(),
    }))
}

/// Stratified k-fold cross-validation: fold `f` is the test set, fold
/// `f + 1 (mod k)` the dev set, and the remaining folds train.
pub fn cross_validate<F: Scalar, L: Learner<F>>(
    learner: &L,
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<CvResult<F>, EvalError> {
    if k < 3 {
        return Err(EvalError::InvalidArgument(format!(
            "cross-validation needs at least 3 folds (train, dev, test), got {k}"
        )));
    }
    run_folds(learner, labels, k, seed, 1.0)?.ok_or_else(|| EvalError::InvalidArgument("a training fold holds a single class".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    /// `None` when the reduced training set held a single class.
    pub report: Option<ClassificationReport>,
}

/// Cross-validation repeated with each fold's training part subsampled to
/// each fraction; dev and test folds stay whole.
pub fn learning_curve<F: Scalar, L: Learner<F>>(
    learner: &L,
    labels: &[bool],
    k: usize,
    seed: u64,
    fractions: &[f64],
) -> Result<Vec<CurvePoint>, EvalError> {
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) || fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::InvalidArgument(
            "fractions must be ascending and within (0, 1]".into(),
        ));
    }
    if k < 3 {
        return Err(EvalError::InvalidArgument(format!("need at least 3 folds, got {k}")));
    }
    fractions
        .iter()
        .map(|&fraction| {
            let report = run_folds(learner, labels, k, seed, fraction)?.map(|r| r.aggregate);
            if report.is_none() {
                log::warn!("learning-curve point {fraction} skipped: single-class training set");
            }
            Ok(CurvePoint { fraction, report })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ArticleEvaluation<F> {
    pub queue: RankedQueue<F>,
    pub golds: HashMap<String, bool>,
    pub report: ClassificationReport,
}

/// Scores every gold-labelled article from per-post probabilities (posts
/// that were empty after preprocessing count as 0), ranks them, and compares
/// the predicted article labels with the gold ones.
pub fn evaluate_articles<F: Scalar>(
    dataset: &Dataset,
    post_probabilities: &HashMap<String, F>,
) -> Result<ArticleEvaluation<F>, EvalError> {
    let labelled = Dataset::new(
        Vec::new(),
        dataset.articles.iter().filter(|a| a.label.is_some()).cloned().collect(),
    );
    let mut scored = Vec::new();
    for post in &dataset.posts {
        if post.is_empty_after_preprocess() {
            scored.push(ScoredPost::empty(post.id.clone()));
        } else if let Some(&p) = post_probabilities.get(&post.id) {
            scored.push(ScoredPost::new(post.id.clone(), p)?);
        }
    }
    let articles = score_articles(&labelled, &scored)?;
    let golds: HashMap<String, bool> = labelled
        .articles
        .iter()
        .map(|a| (a.url.clone(), a.label.is_some_and(|l| l.is_positive())))
        .collect();
    let preds: Vec<bool> = articles.iter().map(|a| a.predicted.is_positive()).collect();
    let gold_vec: Vec<bool> = articles.iter().map(|a| golds[&a.url]).collect();
    let report = classification_report(&preds, &gold_vec)?;
    Ok(ArticleEvaluation {
        queue: rank_articles(articles),
        golds,
        report,
    })
}
