//! Model files: a JSON container with the model kind, hyperparameters,
//! parameters and the fingerprint of the feature space, plus a sibling file
//! holding the vocabulary or embedding matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ForestModel, KernelSvmModel, LogisticModel, ModelError, ModelKind, RecurrentModel, RecurrentParams, TrainConfig,
    TrainedModel, TreeModel,
};
use crate::features::{EmbeddingMatrix, FeatureSpace, TokenizeMode, Vocabulary, Weighting};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// A trained model together with the feature space it reads and the
/// configuration that produced it.
#[derive(Clone, Debug)]
pub struct ModelBundle<F> {
    pub model: TrainedModel<F>,
    pub space: FeatureSpace<F>,
    pub config: TrainConfig,
}

impl<F: Scalar> ModelBundle<F> {
    /// SHA-256 over the hyperparameters, the feature-space fingerprint and the
    /// learned parameters. Identical training runs give identical digests.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        h.update(self.space.fingerprint().as_bytes());
        h.update(serde_json::to_vec(&Parameters::of(&self.model)).expect("parameters serialize"));
        format!("{:x}", h.finalize())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FeatureFile {
    Ngrams {
        tokenizer: TokenizeMode,
        weighting: Weighting,
        vocabulary: String,
    },
    Embeddings {
        tokenizer: TokenizeMode,
        embeddings: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "F: Scalar")]
enum Parameters<F> {
    Lr(LogisticModel<F>),
    Svm(KernelSvmModel<F>),
    Tree(TreeModel<F>),
    Forest(ForestModel<F>),
    Lstm(RecurrentParams<F>),
}

impl<F: Scalar> Parameters<F> {
    fn of(model: &TrainedModel<F>) -> Self {
        match model {
            TrainedModel::Logistic(m) => Parameters::Lr(m.clone()),
            TrainedModel::Svm(m) => Parameters::Svm(m.clone()),
            TrainedModel::Tree(m) => Parameters::Tree(m.clone()),
            TrainedModel::Forest(m) => Parameters::Forest(m.clone()),
            TrainedModel::Recurrent(m) => Parameters::Lstm(m.params.clone()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct ModelFile<F> {
    format_version: u32,
    kind: ModelKind,
    hyperparameters: TrainConfig,
    feature_fingerprint: String,
    features: FeatureFile,
    parameters: Parameters<F>,
}

fn sibling(path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let name = format!("{stem}.{suffix}");
    (path.with_file_name(&name), name)
}

pub fn save_model<F: Scalar>(path: &Path, bundle: &ModelBundle<F>) -> Result<(), ModelError> {
    let features = match &bundle.space {
        FeatureSpace::NGrams {
            tokenizer,
            weighting,
            vocabulary,
        } => {
            let (file, name) = sibling(path, "vocab.jsonl");
            let mut out = BufWriter::new(File::create(file)?);
            vocabulary.write_jsonl(&mut out)?;
            out.flush()?;
            FeatureFile::Ngrams {
                tokenizer: *tokenizer,
                weighting: *weighting,
                vocabulary: name,
            }
        }
        FeatureSpace::Embeddings { tokenizer, embeddings } => {
            let (file, name) = sibling(path, "embeddings.txt");
            let mut out = BufWriter::new(File::create(file)?);
            embeddings.write_text(&mut out)?;
            out.flush()?;
            FeatureFile::Embeddings {
                tokenizer: *tokenizer,
                embeddings: name,
            }
        }
    };
    let parameters = Parameters::of(&bundle.model);
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        kind: bundle.model.kind(),
        hyperparameters: bundle.config.clone(),
        feature_fingerprint: bundle.space.fingerprint(),
        features,
        parameters,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file).map_err(|e| ModelError::Malformed(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_model<F: Scalar>(path: &Path) -> Result<ModelBundle<F>, ModelError> {
    let file: ModelFile<F> = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| ModelError::Malformed(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelError::Malformed(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let space = match file.features {
        FeatureFile::Ngrams {
            tokenizer,
            weighting,
            vocabulary,
        } => FeatureSpace::NGrams {
            tokenizer,
            weighting,
            vocabulary: Vocabulary::read_jsonl(BufReader::new(File::open(path.with_file_name(vocabulary))?))?,
        },
        FeatureFile::Embeddings { tokenizer, embeddings } => FeatureSpace::Embeddings {
            tokenizer,
            embeddings: Arc::new(EmbeddingMatrix::read_text(BufReader::new(File::open(
                path.with_file_name(embeddings),
            )?))?),
        },
    };
    let found = space.fingerprint();
    if found != file.feature_fingerprint {
        return Err(ModelError::FingerprintMismatch(format!(
            "model was trained on {} but the feature file gives {found}",
            file.feature_fingerprint
        )));
    }
    let model = match (file.parameters, &space) {
        (Parameters::Lr(m), _) => TrainedModel::Logistic(m),
        (Parameters::Svm(m), _) => TrainedModel::Svm(m),
        (Parameters::Tree(m), _) => TrainedModel::Tree(m),
        (Parameters::Forest(m), _) => TrainedModel::Forest(m),
        (Parameters::Lstm(p), FeatureSpace::Embeddings { embeddings, .. }) => {
            TrainedModel::Recurrent(RecurrentModel::from_params(p, embeddings.clone())?)
        }
        (Parameters::Lstm(_), _) => {
            return Err(ModelError::Malformed("recurrent model stored with an n-gram feature space".into()))
        }
    };
    if model.kind() != file.kind {
        return Err(ModelError::Malformed(format!(
            "header says {} but parameters are for {}",
            file.kind,
            model.kind()
        )));
    }
    Ok(ModelBundle {
        model,
        space,
        config: file.hyperparameters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CbowConfig, Encoded, FeatureConfig};
    use crate::models::{fit, RecurrentConfig};

    fn texts() -> Vec<String> {
        (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    format!("this is fake story {}", i % 5)
                } else {
                    format!("lovely weather today {}", i % 7)
                }
            })
            .collect()
    }

    fn labels() -> Vec<bool> {
        (0..40).map(|i| i % 2 == 0).collect()
    }

    fn round_trip(space: FeatureSpace<f64>, cfg: TrainConfig) {
        let texts = texts();
        let enc: Vec<Encoded<f64>> = texts.iter().map(|t| space.encode(t)).collect();
        let refs: Vec<&Encoded<f64>> = enc.iter().collect();
        let model = fit(&refs, &labels(), None, &space, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let bundle = ModelBundle { model, space, config: cfg };
        save_model(&path, &bundle).unwrap();
        let back: ModelBundle<f64> = load_model(&path).unwrap();
        assert_eq!(back.config, bundle.config);
        assert_eq!(back.space.fingerprint(), bundle.space.fingerprint());
        assert_eq!(back.fingerprint(), bundle.fingerprint());
        for e in &enc {
            assert_eq!(
                bundle.model.predict_proba(e).unwrap().to_bits(),
                back.model.predict_proba(e).unwrap().to_bits()
            );
        }
    }

    fn ngram_space() -> FeatureSpace<f64> {
        FeatureSpace::fit_ngrams(
            &texts(),
            &FeatureConfig {
                tokenizer: TokenizeMode::Whitespace,
                ..FeatureConfig::default()
            },
        )
    }

    #[test]
    fn sparse_models_round_trip_bit_exactly() {
        for kind in [ModelKind::Lr, ModelKind::Svm, ModelKind::Tree, ModelKind::Forest] {
            let mut cfg = TrainConfig::new(kind, 3);
            cfg.forest.n_trees = 5;
            round_trip(ngram_space(), cfg);
        }
    }

    #[test]
    fn recurrent_model_round_trips_bit_exactly() {
        let cfg = FeatureConfig {
            tokenizer: TokenizeMode::Whitespace,
            cbow: CbowConfig {
                embedding_size: 6,
                min_count: 1,
                epochs: 1,
                ..CbowConfig::default()
            },
            ..FeatureConfig::default()
        };
        let space = FeatureSpace::fit_embeddings(&texts(), &cfg).unwrap();
        let mut train = TrainConfig::new(ModelKind::Lstm, 3);
        train.recurrent = RecurrentConfig {
            hidden: 4,
            max_epochs: 2,
            ..RecurrentConfig::default()
        };
        round_trip(space, train);
    }

    #[test]
    fn tampered_feature_file_is_rejected() {
        let space = ngram_space();
        let texts = texts();
        let enc: Vec<Encoded<f64>> = texts.iter().map(|t| space.encode(t)).collect();
        let refs: Vec<&Encoded<f64>> = enc.iter().collect();
        let cfg = TrainConfig::new(ModelKind::Lr, 0);
        let model = fit(&refs, &labels(), None, &space, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &ModelBundle { model, space, config: cfg }).unwrap();
        let other = FeatureSpace::<f64>::fit_ngrams(
            &["entirely different words"],
            &FeatureConfig {
                tokenizer: TokenizeMode::Whitespace,
                ..FeatureConfig::default()
            },
        );
        let FeatureSpace::NGrams { vocabulary, .. } = other else { unreachable!() };
        vocabulary
            .write_jsonl(File::create(dir.path().join("m.vocab.jsonl")).unwrap())
            .unwrap();
        let err = load_model::<f64>(&path).unwrap_err();
        assert!(matches!(err, ModelError::FingerprintMismatch(_)), "{err:?}");
    }
}
