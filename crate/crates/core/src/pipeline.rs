//! Post probabilities → article scores → ranked review queue.
//!
//! An article's score is the highest probability among its posts, and it is
//! predicted suspicious when that score is strictly above 0.5.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleLabel, Dataset, Post};
use crate::features::{Encoded, FeatureConfig, FeatureError, FeatureSpace};
use crate::models::{fit, ModelError, ModelKind, TrainConfig, TrainedModel};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("article {0} has no posts")]
    EmptyArticle(String),
    #[error("post {post_id} has probability {value}, outside [0, 1]")]
    InvalidProbability { post_id: String, value: f64 },
    #[error("article {url} lists post {post_id}, which has no score")]
    MissingPost { url: String, post_id: String },
    #[error("no labelled post with a non-empty comment to train on")]
    NothingToTrain,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::EmptyArticle(_) => "empty_article",
            PipelineError::InvalidProbability { .. } => "invalid_probability",
            PipelineError::MissingPost { .. } => "missing_post",
            PipelineError::NothingToTrain => "nothing_to_train",
            PipelineError::Feature(e) => e.code(),
            PipelineError::Model(e) => e.code(),
            PipelineError::Io(_) => "io",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ScoredPost<F> {
    pub post_id: String,
    pub probability: F,
    /// The comment was empty after preprocessing; the probability is 0.
    pub empty: bool,
}

impl<F: Scalar> ScoredPost<F> {
    pub fn new(post_id: impl Into<String>, probability: F) -> Result<Self, PipelineError> {
        let post_id = post_id.into();
        if !(probability >= F::zero() && probability <= F::one()) {
            return Err(PipelineError::InvalidProbability {
                post_id,
                value: probability.as_f64(),
            });
        }
        Ok(ScoredPost {
            post_id,
            probability,
            empty: false,
        })
    }

    pub fn empty(post_id: impl Into<String>) -> Self {
        ScoredPost {
            post_id: post_id.into(),
            probability: F::zero(),
            empty: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ScoredArticle<F> {
    pub url: String,
    pub score: F,
    /// First post reaching the maximum.
    pub contributor: String,
    pub predicted: ArticleLabel,
    /// Every post was empty after preprocessing.
    pub all_empty: bool,
    pub post_count: usize,
}

/// Max-probability article score; ties resolve to the first post.
pub fn score_article<F: Scalar>(url: &str, posts: &[ScoredPost<F>]) -> Result<ScoredArticle<F>, PipelineError> {
    let first = posts.first().ok_or_else(|| PipelineError::EmptyArticle(url.to_string()))?;
    let mut best = first;
    for p in &posts[1..] {
        if p.probability > best.probability {
            best = p;
        }
    }
    let mut article = ScoredArticle {
        url: url.to_string(),
        score: best.probability,
        contributor: best.post_id.clone(),
        predicted: ArticleLabel::NotSuspicious,
        all_empty: posts.iter().all(|p| p.empty),
        post_count: posts.len(),
    };
    article.predicted = ArticleLabel::from_positive(classify_article(&article));
    Ok(article)
}

/// Suspicious iff the score is strictly greater than 0.5.
pub fn classify_article<F: Scalar>(article: &ScoredArticle<F>) -> bool {
    article.score > F::of(0.5)
}

/// Alternative aggregations, excluded from the evaluation protocol.
#[cfg(feature = "experimental-aggregation")]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Max,
    Mean,
    NoisyOr,
}

#[cfg(feature = "experimental-aggregation")]
pub fn score_article_with<F: Scalar>(
    url: &str,
    posts: &[ScoredPost<F>],
    aggregation: Aggregation,
) -> Result<ScoredArticle<F>, PipelineError> {
    let mut article = score_article(url, posts)?;
    article.score = match aggregation {
        Aggregation::Max => article.score,
        Aggregation::Mean => posts.iter().map(|p| p.probability).sum::<F>() / F::of(posts.len() as f64),
        Aggregation::NoisyOr => F::one() - posts.iter().fold(F::one(), |acc, p| acc * (F::one() - p.probability)),
    };
    article.predicted = ArticleLabel::from_positive(classify_article(&article));
    Ok(article)
}

/// Articles by descending score, ties by ascending url.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RankedQueue<F>(Vec<ScoredArticle<F>>);

impl<F: Scalar> RankedQueue<F> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[ScoredArticle<F>] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredArticle<F>> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<ScoredArticle<F>> {
        self.0
    }

    pub fn get(&self, url: &str) -> Option<&ScoredArticle<F>> {
        self.0.iter().find(|a| a.url == url)
    }

    /// 1-based rank of every url.
    pub fn ranks(&self) -> HashMap<&str, usize> {
        self.0.iter().enumerate().map(|(i, a)| (a.url.as_str(), i + 1)).collect()
    }
}

pub fn rank_articles<F: Scalar>(mut articles: Vec<ScoredArticle<F>>) -> RankedQueue<F> {
    articles.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.url.cmp(&b.url))
    });
    RankedQueue(articles)
}

/// Scores every post: empty-after-preprocess posts get 0, the rest go through
/// the model. Output order follows `posts`.
pub fn score_posts<F: Scalar>(
    posts: &[Post],
    space: &FeatureSpace<F>,
    model: &TrainedModel<F>,
) -> Result<Vec<ScoredPost<F>>, PipelineError> {
    posts
        .par_iter()
        .map(|post| {
            if post.is_empty_after_preprocess() {
                return Ok(ScoredPost::empty(post.id.clone()));
            }
            let p = model.predict_proba(&space.encode(post.comment()))?;
            ScoredPost::new(post.id.clone(), p)
        })
        .collect()
}

/// Groups scored posts by article. Every listed post must have a score.
pub fn score_articles<F: Scalar>(
    dataset: &Dataset,
    scored: &[ScoredPost<F>],
) -> Result<Vec<ScoredArticle<F>>, PipelineError> {
    let by_id: HashMap<&str, &ScoredPost<F>> = scored.iter().map(|s| (s.post_id.as_str(), s)).collect();
    dataset
        .articles
        .iter()
        .map(|article| {
            let posts = article
                .post_ids
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).map(|s| (*s).clone()).ok_or_else(|| PipelineError::MissingPost {
                        url: article.url.clone(),
                        post_id: id.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            score_article(&article.url, &posts)
        })
        .collect()
}

/// Scores, aggregates and ranks a whole dataset.
pub fn build_queue<F: Scalar>(
    dataset: &Dataset,
    space: &FeatureSpace<F>,
    model: &TrainedModel<F>,
) -> Result<(RankedQueue<F>, Vec<ScoredPost<F>>), PipelineError> {
    let scored = score_posts(&dataset.posts, space, model)?;
    let articles = score_articles(dataset, &scored)?;
    Ok((rank_articles(articles), scored))
}

/// Comments the feature space is fit on: every post that is non-empty after
/// preprocessing, labelled or not. Labels are never consulted.
pub fn feature_texts(dataset: &Dataset) -> Vec<&str> {
    dataset
        .posts
        .iter()
        .filter(|p| !p.is_empty_after_preprocess())
        .map(|p| p.comment())
        .collect()
}

/// N-gram space for the sparse models, CBOW embeddings for the recurrent one.
pub fn fit_feature_space<F: Scalar>(
    dataset: &Dataset,
    kind: ModelKind,
    cfg: &FeatureConfig,
) -> Result<FeatureSpace<F>, PipelineError> {
    let texts = feature_texts(dataset);
    Ok(if kind.uses_embeddings() {
        FeatureSpace::fit_embeddings(&texts, cfg)?
    } else {
        FeatureSpace::fit_ngrams(&texts, cfg)
    })
}

/// Labelled, non-empty posts in dataset order, encoded.
#[derive(Clone, Debug)]
pub struct TrainingSet<F> {
    pub post_ids: Vec<String>,
    pub inputs: Vec<Encoded<F>>,
    pub labels: Vec<bool>,
}

pub fn training_set<F: Scalar>(dataset: &Dataset, space: &FeatureSpace<F>) -> TrainingSet<F> {
    let trainable: Vec<&Post> = dataset.posts.iter().filter(|p| p.is_trainable()).collect();
    TrainingSet {
        post_ids: trainable.iter().map(|p| p.id.clone()).collect(),
        inputs: trainable.par_iter().map(|p| space.encode(p.comment())).collect(),
        labels: trainable
            .iter()
            .map(|p| p.label.is_some_and(|l| l.is_positive()))
            .collect(),
    }
}

/// Trains on every labelled, non-empty post.
pub fn train_on_dataset<F: Scalar>(
    dataset: &Dataset,
    space: &FeatureSpace<F>,
    cfg: &TrainConfig,
) -> Result<TrainedModel<F>, PipelineError> {
    let set = training_set(dataset, space);
    if set.labels.is_empty() {
        return Err(PipelineError::NothingToTrain);
    }
    let inputs: Vec<&Encoded<F>> = set.inputs.iter().collect();
    Ok(fit(&inputs, &set.labels, None, space, cfg)?)
}

pub const RANKED_CSV_HEADER: &str = "rank,url,score,contributing_post_id,predicted_label";

pub fn write_ranked_csv<F: Scalar, W: Write>(queue: &RankedQueue<F>, out: W) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| PipelineError::Io(e.into());
    w.write_record(RANKED_CSV_HEADER.split(',')).map_err(io)?;
    for (i, a) in queue.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            a.url.clone(),
            format!("{:.6}", a.score.as_f64()),
            a.contributor.clone(),
            u8::from(a.predicted.is_positive()).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
