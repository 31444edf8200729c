//! Comment text → model inputs: tokens, sparse n-gram vectors and word
//! embeddings.

mod cbow;
mod sparse;
mod tokenize;
mod vocab;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use cbow::{
    embed_sequence, initial_embeddings, negative_sampling_grad, train_cbow, train_cbow_with_losses, CbowConfig,
    CbowOutcome, EmbeddingMatrix, NegativeSamplingGrad, UNK_TOKEN,
};
pub use sparse::SparseVector;
pub use tokenize::{tokenize, TokenSequence, TokenizeMode, Tokenizer};
pub use vocab::{build_vocabulary, vectorize_ngrams, VocabEntry, Vocabulary, Weighting, BIGRAM_JOINER};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("sparse index {index} out of order or beyond dimension {dim}")]
    InvalidSparseIndex { index: usize, dim: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid embedding matrix: {0}")]
    InvalidEmbedding(String),
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("no token reaches the minimum count")]
    EmptyVocabulary,
    #[error("every token is out of vocabulary and no <unk> row exists")]
    AllOutOfVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FeatureError {
    pub fn code(&self) -> &'static str {
        match self {
            FeatureError::InvalidSparseIndex { .. } => "invalid_sparse_vector",
            FeatureError::InvalidVocabulary(_) => "invalid_vocabulary",
            FeatureError::InvalidEmbedding(_) => "invalid_embedding",
            FeatureError::InvalidConfig(_) => "invalid_config",
            FeatureError::EmptyVocabulary => "empty_vocabulary",
            FeatureError::AllOutOfVocabulary => "all_out_of_vocabulary",
            FeatureError::Io(_) => "io",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub tokenizer: TokenizeMode,
    pub min_df: usize,
    pub weighting: Weighting,
    pub cbow: CbowConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            tokenizer: TokenizeMode::Auto,
            min_df: 1,
            weighting: Weighting::Binary,
            cbow: CbowConfig::default(),
        }
    }
}

/// A post encoded for one of the model families.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoded<F> {
    Sparse(SparseVector<F>),
    Tokens(TokenSequence),
}

impl<F> Encoded<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            Encoded::Sparse(_) => "sparse n-gram vector",
            Encoded::Tokens(_) => "token sequence",
        }
    }
}

/// Frozen mapping from comment text to model input.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSpace<F> {
    NGrams {
        tokenizer: TokenizeMode,
        weighting: Weighting,
        vocabulary: Vocabulary,
    },
    Embeddings {
        tokenizer: TokenizeMode,
        embeddings: Arc<EmbeddingMatrix<F>>,
    },
}

impl<F: Scalar> FeatureSpace<F> {
    /// N-gram space over all given texts. Only document frequencies are used,
    /// never labels.
    pub fn fit_ngrams<S: AsRef<str>>(texts: &[S], cfg: &FeatureConfig) -> Self {
        let docs: Vec<TokenSequence> = texts.iter().map(|t| tokenize(t.as_ref(), cfg.tokenizer)).collect();
        FeatureSpace::NGrams {
            tokenizer: cfg.tokenizer,
            weighting: cfg.weighting,
            vocabulary: build_vocabulary(&docs, cfg.min_df),
        }
    }

    pub fn fit_embeddings<S: AsRef<str>>(texts: &[S], cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        let docs: Vec<TokenSequence> = texts.iter().map(|t| tokenize(t.as_ref(), cfg.tokenizer)).collect();
        Ok(FeatureSpace::Embeddings {
            tokenizer: cfg.tokenizer,
            embeddings: Arc::new(train_cbow(&docs, &cfg.cbow)?),
        })
    }

    pub fn tokenizer(&self) -> TokenizeMode {
        match self {
            FeatureSpace::NGrams { tokenizer, .. } | FeatureSpace::Embeddings { tokenizer, .. } => *tokenizer,
        }
    }

    pub fn encode(&self, text: &str) -> Encoded<F> {
        match self {
            FeatureSpace::NGrams {
                tokenizer,
                weighting,
                vocabulary,
            } => Encoded::Sparse(vectorize_ngrams(&tokenize(text, *tokenizer), vocabulary, *weighting)),
            FeatureSpace::Embeddings { tokenizer, .. } => Encoded::Tokens(tokenize(text, *tokenizer)),
        }
    }

    /// Identifies the exact mapping; a model trained on one space refuses
    /// inputs from another.
    pub fn fingerprint(&self) -> String {
        match self {
            FeatureSpace::NGrams {
                tokenizer,
                weighting,
                vocabulary,
            } => format!("ngrams:{tokenizer:?}:{weighting:?}:{}", vocabulary.fingerprint()),
            FeatureSpace::Embeddings { tokenizer, embeddings } => {
                format!("embeddings:{tokenizer:?}:{}", embeddings.fingerprint())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_dimension_is_fixed_across_inputs() {
        let texts = ["これは誤報", "いい天気だ", "fake news!"];
        let space = FeatureSpace::<f64>::fit_ngrams(&texts, &FeatureConfig::default());
        let dims: Vec<usize> = ["誤報", "", "totally unseen", "天気"]
            .iter()
            .map(|t| match space.encode(t) {
                Encoded::Sparse(v) => v.dim(),
                Encoded::Tokens(_) => unreachable!(),
            })
            .collect();
        assert!(dims.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let texts = ["a b", "b c"];
        let cfg = FeatureConfig {
            tokenizer: TokenizeMode::Whitespace,
            ..FeatureConfig::default()
        };
        let a = FeatureSpace::<f64>::fit_ngrams(&texts, &cfg);
        let b = FeatureSpace::<f64>::fit_ngrams(
            &texts,
            &FeatureConfig {
                weighting: Weighting::Count,
                ..cfg.clone()
            },
        );
        assert_eq!(a.fingerprint(), FeatureSpace::<f64>::fit_ngrams(&texts, &cfg).fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn embedded_length_never_exceeds_token_count() {
        let texts: Vec<String> = (0..40).map(|i| format!("w{} common x{}", i % 5, i % 3)).collect();
        let cfg = FeatureConfig {
            tokenizer: TokenizeMode::Whitespace,
            cbow: CbowConfig {
                embedding_size: 8,
                min_count: 5,
                subsample: 0.5,
                epochs: 1,
                ..CbowConfig::default()
            },
            ..FeatureConfig::default()
        };
        let space = FeatureSpace::<f64>::fit_embeddings(&texts, &cfg).unwrap();
        let FeatureSpace::Embeddings { embeddings, .. } = &space else {
            unreachable!()
        };
        for t in ["w1 common", "unseen tokens only", ""] {
            let seq = tokenize(t, TokenizeMode::Whitespace);
            let rows = embed_sequence(&seq, embeddings).unwrap();
            assert!(rows.len() <= seq.len());
        }
    }
}
