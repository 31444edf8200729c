//! Suspicious-news triage: score social-media posts for suspicion casting,
//! aggregate them into article scores and rank articles for fact-checkers.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file fix it to `f64`, which is what the command line
//! tool and the service use.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod models;
pub mod num;
pub mod pipeline;

pub use num::Scalar;

pub type SparseVector = features::SparseVector<f64>;
pub type EmbeddingMatrix = features::EmbeddingMatrix<f64>;
pub type FeatureSpace = features::FeatureSpace<f64>;
pub type Encoded = features::Encoded<f64>;
pub type TrainedModel = models::TrainedModel<f64>;
pub type ModelBundle = models::ModelBundle<f64>;
pub type ScoredPost = pipeline::ScoredPost<f64>;
pub type ScoredArticle = pipeline::ScoredArticle<f64>;
pub type RankedQueue = pipeline::RankedQueue<f64>;
pub type CvResult = eval::CvResult<f64>;
pub type DatasetEvaluation = eval::DatasetEvaluation<f64>;
