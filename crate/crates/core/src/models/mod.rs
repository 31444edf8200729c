//! Post-level classifiers. Each maps an encoded post to P(SCP | post).

mod logistic;
mod loss;
mod persist;
mod recurrent;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Encoded, FeatureError, FeatureSpace, SparseVector, TokenSequence};
use crate::Scalar;

pub use logistic::{logistic_gradient, logistic_objective, train_logistic, LogisticConfig, LogisticModel};
pub use loss::bce_loss;
pub use persist::{load_model, save_model, ModelBundle, FORMAT_VERSION};
pub use tree::{train_forest, train_tree, ForestConfig, ForestModel, TreeConfig, TreeModel, TreeNode};
pub use recurrent::{clip_global_norm, train_recurrent, RecurrentConfig, RecurrentModel, RecurrentParams};
pub use svm::{default_gamma, fit_platt, train_svm, KernelSvmModel, SvmConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("model expects a {expected} but was given a {found}")]
    InputMismatch { expected: &'static str, found: &'static str },
    #[error("sequence has no tokens")]
    EmptySequence,
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("model file does not match its feature data: {0}")]
    FingerprintMismatch(String),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::LengthMismatch { .. } => "length_mismatch",
            ModelError::EmptyTrainingSet => "empty_training_set",
            ModelError::SingleClass => "single_class",
            ModelError::DimensionMismatch { .. } => "dimension_mismatch",
            ModelError::InvalidConfig(_) => "invalid_config",
            ModelError::InputMismatch { .. } => "input_mismatch",
            ModelError::EmptySequence => "empty_sequence",
            ModelError::DegenerateData(_) => "degenerate_data",
            ModelError::FingerprintMismatch(_) => "fingerprint_mismatch",
            ModelError::Malformed(_) => "malformed_model",
            ModelError::Feature(e) => e.code(),
            ModelError::Io(_) => "io",
        }
    }
}

/// Validates a labelled training set and returns its common feature dimension.
pub(crate) fn check_training_set<I>(dims: I, ys: &[bool]) -> Result<usize, ModelError>
where
    I: IntoIterator<Item = usize>,
{
    let mut n = 0;
    let mut dim = None;
    for d in dims {
        n += 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => return Err(ModelError::DimensionMismatch { expected, found: d }),
            _ => {}
        }
    }
    if n != ys.len() {
        return Err(ModelError::LengthMismatch { left: n, right: ys.len() });
    }
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
        return Err(ModelError::SingleClass);
    }
    Ok(dim.unwrap_or(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Svm,
    Tree,
    Forest,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Lr, ModelKind::Svm, ModelKind::Tree, ModelKind::Forest, ModelKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Lstm => "lstm",
        }
    }

    /// Whether the model reads token sequences through word embeddings rather
    /// than sparse n-gram vectors.
    pub fn uses_embeddings(self) -> bool {
        self == ModelKind::Lstm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown model {s:?}; expected lr, svm, tree, forest or lstm")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub seed: u64,
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub recurrent: RecurrentConfig,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            kind,
            seed,
            logistic: LogisticConfig::default(),
            svm: SvmConfig::default(),
            tree: TreeConfig::default(),
            forest: ForestConfig::default(),
            recurrent: RecurrentConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TrainedModel<F> {
    Logistic(LogisticModel<F>),
    Svm(KernelSvmModel<F>),
    Tree(TreeModel<F>),
    Forest(ForestModel<F>),
    Recurrent(RecurrentModel<F>),
}

impl<F: Scalar> TrainedModel<F> {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Logistic(_) => ModelKind::Lr,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Tree(_) => ModelKind::Tree,
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Recurrent(_) => ModelKind::Lstm,
        }
    }

    fn sparse_dim(&self) -> usize {
        match self {
            TrainedModel::Logistic(m) => m.dim(),
            TrainedModel::Svm(m) => m.dim(),
            TrainedModel::Tree(m) => m.dim(),
            TrainedModel::Forest(m) => m.dim(),
            TrainedModel::Recurrent(_) => 0,
        }
    }

    /// P(y = 1 | x) for an input encoded by the model's feature space.
    pub fn predict_proba(&self, input: &Encoded<F>) -> Result<F, ModelError> {
        let p = match (self, input) {
            (TrainedModel::Recurrent(m), Encoded::Tokens(seq)) => m.predict_proba(seq)?,
            (TrainedModel::Recurrent(_), other) => {
                return Err(ModelError::InputMismatch {
                    expected: "token sequence",
                    found: other.kind(),
                })
            }
            (_, Encoded::Sparse(x)) => {
                let dim = self.sparse_dim();
                if dim != 0 && x.dim() != dim {
                    return Err(ModelError::DimensionMismatch {
                        expected: dim,
                        found: x.dim(),
                    });
                }
                self.predict_sparse(x)
            }
            (_, other) => {
                return Err(ModelError::InputMismatch {
                    expected: "sparse n-gram vector",
                    found: other.kind(),
                })
            }
        };
        Ok(p.max(F::zero()).min(F::one()))
    }

    fn predict_sparse(&self, x: &SparseVector<F>) -> F {
        match self {
            TrainedModel::Logistic(m) => m.predict_proba(x),
            TrainedModel::Svm(m) => m.predict_proba(x),
            TrainedModel::Tree(m) => m.predict_proba(x),
            TrainedModel::Forest(m) => m.predict_proba(x),
            TrainedModel::Recurrent(_) => unreachable!("handled by the caller"),
        }
    }
}

fn sparse_inputs<'a, F>(inputs: &[&'a Encoded<F>]) -> Result<Vec<&'a SparseVector<F>>, ModelError> {
    inputs
        .iter()
        .map(|e| match e {
            Encoded::Sparse(x) => Ok(x),
            other => Err(ModelError::InputMismatch {
                expected: "sparse n-gram vector",
                found: other.kind(),
            }),
        })
        .collect()
}

fn token_inputs<'a, F>(inputs: &[&'a Encoded<F>]) -> Result<Vec<&'a TokenSequence>, ModelError> {
    inputs
        .iter()
        .map(|e| match e {
            Encoded::Tokens(s) => Ok(s),
            other => Err(ModelError::InputMismatch {
                expected: "token sequence",
                found: other.kind(),
            }),
        })
        .collect()
}

/// Trains the model selected by `cfg.kind`. `dev` is only used by the
/// recurrent model, for early stopping.
pub fn fit<F: Scalar>(
    inputs: &[&Encoded<F>],
    ys: &[bool],
    dev: Option<(&[&Encoded<F>], &[bool])>,
    space: &FeatureSpace<F>,
    cfg: &TrainConfig,
) -> Result<TrainedModel<F>, ModelError> {
    Ok(match cfg.kind {
        ModelKind::Lr => TrainedModel::Logistic(train_logistic(&sparse_inputs(inputs)?, ys, &cfg.logistic)?),
        ModelKind::Svm => TrainedModel::Svm(train_svm(&sparse_inputs(inputs)?, ys, &cfg.svm, cfg.seed)?),
        ModelKind::Tree => TrainedModel::Tree(train_tree(&sparse_inputs(inputs)?, ys, &cfg.tree)?),
        ModelKind::Forest => TrainedModel::Forest(train_forest(&sparse_inputs(inputs)?, ys, &cfg.forest, cfg.seed)?),
        ModelKind::Lstm => {
            let FeatureSpace::Embeddings { embeddings, .. } = space else {
                return Err(ModelError::InputMismatch {
                    expected: "embedding feature space",
                    found: "n-gram feature space",
                });
            };
            let seqs = token_inputs(inputs)?;
            let dev_seqs = match dev {
                Some((x, _)) if !x.is_empty() => Some(token_inputs(x)?),
                _ => None,
            };
            let dev_pair = match (&dev_seqs, dev) {
                (Some(s), Some((_, y))) => Some((s.as_slice(), y)),
                _ => None,
            };
            TrainedModel::Recurrent(train_recurrent(&seqs, ys, dev_pair, embeddings.clone(), &cfg.recurrent, cfg.seed)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, TokenizeMode};

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("bert".parse::<ModelKind>().is_err());
    }

    #[test]
    fn wrong_representation_is_rejected() {
        let lr = TrainedModel::Logistic(LogisticModel::<f64>::zeros(3));
        let tokens = Encoded::Tokens(TokenSequence::new(["a"]));
        assert!(matches!(lr.predict_proba(&tokens), Err(ModelError::InputMismatch { .. })));
        let wide = Encoded::Sparse(SparseVector::empty(4));
        assert!(matches!(lr.predict_proba(&wide), Err(ModelError::DimensionMismatch { .. })));
        assert_eq!(lr.predict_proba(&Encoded::Sparse(SparseVector::empty(3))).unwrap(), 0.5);
    }

    #[test]
    fn every_sparse_kind_trains_through_dispatch() {
        let texts = ["fake claim here", "good news", "fake fake", "nice day", "claim is fake", "lovely news"];
        let ys = [true, false, true, false, true, false];
        let cfg = FeatureConfig {
            tokenizer: TokenizeMode::Whitespace,
            ..FeatureConfig::default()
        };
        let space = FeatureSpace::<f64>::fit_ngrams(&texts, &cfg);
        let enc: Vec<Encoded<f64>> = texts.iter().map(|t| space.encode(t)).collect();
        let refs: Vec<&Encoded<f64>> = enc.iter().collect();
        for kind in [ModelKind::Lr, ModelKind::Svm, ModelKind::Tree, ModelKind::Forest] {
            let m = fit(&refs, &ys, None, &space, &TrainConfig::new(kind, 1)).unwrap();
            assert_eq!(m.kind(), kind);
            let p = m.predict_proba(&space.encode("fake")).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(fit(&refs, &ys, None, &space, &TrainConfig::new(ModelKind::Lstm, 1)).is_err());
    }
}
