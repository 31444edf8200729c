//! Continuous bag-of-words embeddings trained with negative sampling.
//!
//! The context window is the full `window` tokens on each side of the
//! center. Tokens below `min_count` all share one `<unk>` row, which is
//! trained like any other word so that every position has a vector.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::hex;
use super::{FeatureError, TokenSequence};
use crate::num::{dot, sigmoid, softplus};
use crate::Scalar;

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbowConfig {
    pub embedding_size: usize,
    /// Context tokens taken on each side of the center.
    pub window: usize,
    pub min_count: usize,
    pub subsample: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Learning rate decays linearly from `start_lr` to `end_lr` over all
    /// training tokens.
    pub start_lr: f64,
    pub end_lr: f64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            embedding_size: 300,
            window: 7,
            min_count: 20,
            subsample: 1e-5,
            negatives: 5,
            epochs: 5,
            seed: 42,
            start_lr: 0.025,
            end_lr: 0.0001,
        }
    }
}

impl CbowConfig {
    fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.embedding_size == 0 {
            return bad("embedding_size must be positive");
        }
        if self.window == 0 || self.min_count == 0 || self.negatives == 0 {
            return bad("window, min_count and negatives must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample < 1.0) {
            return bad("subsample must lie in (0, 1)");
        }
        if !(self.start_lr > 0.0 && self.end_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// `vocab_size × dim` matrix of word vectors with its token index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding<F>", into = "RawEmbedding<F>")]
#[serde(bound = "F: Scalar")]
pub struct EmbeddingMatrix<F> {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: Option<usize>,
    dim: usize,
    data: Vec<F>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct RawEmbedding<F> {
    dim: usize,
    tokens: Vec<String>,
    data: Vec<F>,
}

impl<F: Scalar> TryFrom<RawEmbedding<F>> for EmbeddingMatrix<F> {
    type Error = FeatureError;

    fn try_from(raw: RawEmbedding<F>) -> Result<Self, FeatureError> {
        EmbeddingMatrix::new(raw.tokens, raw.dim, raw.data)
    }
}

impl<F: Scalar> From<EmbeddingMatrix<F>> for RawEmbedding<F> {
    fn from(m: EmbeddingMatrix<F>) -> Self {
        RawEmbedding {
            dim: m.dim,
            tokens: m.tokens,
            data: m.data,
        }
    }
}

impl<F: Scalar> EmbeddingMatrix<F> {
    /// Row-major `data` of `tokens.len() × dim`. A token named `<unk>` becomes
    /// the out-of-vocabulary row.
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<F>) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::InvalidEmbedding("dimension must be positive".into()));
        }
        if data.len() != tokens.len() * dim {
            return Err(FeatureError::InvalidEmbedding(format!(
                "{} values for {} rows of {dim}",
                data.len(),
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(FeatureError::InvalidEmbedding(format!("duplicate token {t:?}")));
            }
        }
        let unk = index.get(UNK_TOKEN).copied();
        Ok(EmbeddingMatrix {
            tokens,
            index,
            unk,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk_row(&self) -> Option<usize> {
        self.unk
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row for `token`, falling back to `<unk>` when present.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().or(self.unk)
    }

    /// Row indices for a sequence; tokens without a row are dropped.
    pub fn sequence_rows(&self, seq: &TokenSequence) -> Result<Vec<usize>, FeatureError> {
        let rows: Vec<usize> = seq.iter().filter_map(|t| self.lookup(t)).collect();
        if rows.is_empty() && !seq.is_empty() {
            return Err(FeatureError::AllOutOfVocabulary);
        }
        Ok(rows)
    }

    /// Text format: `rows dim` header, then `token v_1 … v_dim` per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), FeatureError> {
        writeln!(out, "{} {}", self.rows(), self.dim)?;
        for (i, t) in self.tokens.iter().enumerate() {
            write!(out, "{t}")?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, FeatureError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| FeatureError::InvalidEmbedding("missing header".into()))??;
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize, FeatureError> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| FeatureError::InvalidEmbedding(format!("bad header {header:?}")))
        };
        let rows = parse_usize(parts.next())?;
        let dim = parse_usize(parts.next())?;
        let mut tokens = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * dim);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default().to_string();
            let before = data.len();
            for f in fields.filter(|f| !f.is_empty()) {
                let v: f64 = f
                    .parse()
                    .map_err(|_| FeatureError::InvalidEmbedding(format!("line {}: bad value {f:?}", n + 2)))?;
                data.push(F::of(v));
            }
            if data.len() - before != dim {
                return Err(FeatureError::InvalidEmbedding(format!(
                    "line {}: expected {dim} values, got {}",
                    n + 2,
                    data.len() - before
                )));
            }
            tokens.push(token);
        }
        if tokens.len() != rows {
            return Err(FeatureError::InvalidEmbedding(format!(
                "header declares {rows} rows, found {}",
                tokens.len()
            )));
        }
        Self::new(tokens, dim, data)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("embedding-matrix\n{} {}\n", self.rows(), self.dim).as_bytes());
        for (i, t) in self.tokens.iter().enumerate() {
            h.update(t.as_bytes());
            for v in self.row(i) {
                h.update(v.as_f64().to_le_bytes());
            }
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

/// Vector list for a sequence: each known token's row, `<unk>` for the rest.
pub fn embed_sequence<F: Scalar>(seq: &TokenSequence, emb: &EmbeddingMatrix<F>) -> Result<Vec<Vec<F>>, FeatureError> {
    Ok(emb
        .sequence_rows(seq)?
        .into_iter()
        .map(|r| emb.row(r).to_vec())
        .collect())
}

/// Loss and gradients of the negative-sampling objective for one center word
/// against the averaged context vector `h`:
/// `-log σ(h·u_pos) - Σ_k log σ(-h·u_neg_k)`.
#[derive(Clone, Debug)]
pub struct NegativeSamplingGrad<F> {
    pub loss: F,
    pub hidden: Vec<F>,
    /// Gradient for the positive output row followed by each negative row.
    pub outputs: Vec<Vec<F>>,
}

pub fn negative_sampling_grad<F: Scalar>(hidden: &[F], positive: &[F], negatives: &[&[F]]) -> NegativeSamplingGrad<F> {
    let mut loss = F::zero();
    let mut grad_h = vec![F::zero(); hidden.len()];
    let mut outputs = Vec::with_capacity(1 + negatives.len());
    for (row, label) in std::iter::once((positive, true)).chain(negatives.iter().map(|r| (*r, false))) {
        let score = dot(hidden, row);
        // d/ds of -log σ(±s)
        let coeff = if label {
            loss = loss + softplus(-score);
            sigmoid(score) - F::one()
        } else {
            loss = loss + softplus(score);
            sigmoid(score)
        };
        for (g, &u) in grad_h.iter_mut().zip(row) {
            *g = *g + coeff * u;
        }
        outputs.push(hidden.iter().map(|&h| coeff * h).collect());
    }
    NegativeSamplingGrad {
        loss,
        hidden: grad_h,
        outputs,
    }
}

struct CbowVocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl CbowVocab {
    fn build(corpus: &[TokenSequence], min_count: usize) -> Result<Self, FeatureError> {
        let mut raw: HashMap<&str, u64> = HashMap::new();
        for seq in corpus {
            for t in seq.iter() {
                *raw.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = raw
            .iter()
            .filter(|(_, &c)| c >= min_count as u64)
            .map(|(t, c)| (*t, *c))
            .collect();
        if kept.is_empty() {
            return Err(FeatureError::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let rare: u64 = raw.values().filter(|&&c| c < min_count as u64).sum();
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut counts = vec![rare];
        for (t, c) in kept {
            tokens.push(t.to_string());
            counts.push(c);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(CbowVocab { tokens, counts, index })
    }

    fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }
}

/// Initial input vectors: uniform in `(-0.5/dim, 0.5/dim)`, drawn in row order
/// from the config seed.
fn initial_rows<F: Scalar>(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<F> {
    (0..rows * dim)
        .map(|_| F::of((rng.random::<f64>() - 0.5) / dim as f64))
        .collect()
}

/// Embedding matrix before any training step, as `train_cbow` starts from it.
pub fn initial_embeddings<F: Scalar>(corpus: &[TokenSequence], cfg: &CbowConfig) -> Result<EmbeddingMatrix<F>, FeatureError> {
    cfg.validate()?;
    let vocab = CbowVocab::build(corpus, cfg.min_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = initial_rows(vocab.tokens.len(), cfg.embedding_size, &mut rng);
    EmbeddingMatrix::new(vocab.tokens, cfg.embedding_size, data)
}

/// Trained embeddings plus the mean negative-sampling loss of every epoch.
#[derive(Clone, Debug)]
pub struct CbowOutcome<F> {
    pub embeddings: EmbeddingMatrix<F>,
    pub epoch_losses: Vec<F>,
}

pub fn train_cbow<F: Scalar>(corpus: &[TokenSequence], cfg: &CbowConfig) -> Result<EmbeddingMatrix<F>, FeatureError> {
    Ok(train_cbow_with_losses(corpus, cfg)?.embeddings)
}

/// Single-worker trainer; the result depends only on the corpus and config.
pub fn train_cbow_with_losses<F: Scalar>(corpus: &[TokenSequence], cfg: &CbowConfig) -> Result<CbowOutcome<F>, FeatureError> {
    cfg.validate()?;
    let vocab = CbowVocab::build(corpus, cfg.min_count)?;
    let dim = cfg.embedding_size;
    let rows = vocab.tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = EmbeddingMatrix::new(vocab.tokens.clone(), dim, initial_rows(rows, dim, &mut rng))?;
    let mut output = vec![F::zero(); rows * dim];

    // cumulative unigram^0.75 distribution for negatives
    let mut cumulative = Vec::with_capacity(rows);
    let mut acc = 0.0f64;
    for &c in &vocab.counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_weight = acc;

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().map(|t| vocab.id(t)).collect())
        .collect();
    let train_words: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let threshold = cfg.subsample * train_words as f64;
    let keep_prob: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                let f = c as f64;
                ((f / threshold).sqrt() + 1.0) * threshold / f
            }
        })
        .collect();

    let total_steps = (cfg.epochs as u64 * train_words).max(1) as f64;
    let mut processed = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut hidden = vec![F::zero(); dim];
    let mut hidden_grad = vec![F::zero(); dim];

    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut loss_terms = 0u64;
        for sentence in &sentences {
            let lr = F::of(cfg.start_lr - (cfg.start_lr - cfg.end_lr) * (processed as f64 / total_steps));
            processed += sentence.len() as u64;
            let kept: Vec<usize> = sentence
                .iter()
                .copied()
                .filter(|&w| keep_prob[w] >= 1.0 || rng.random::<f64>() < keep_prob[w])
                .collect();
            for pos in 0..kept.len() {
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(kept.len());
                let context: Vec<usize> = (lo..hi).filter(|&p| p != pos).map(|p| kept[p]).collect();
                if context.is_empty() {
                    continue;
                }
                let center = kept[pos];
                let scale = F::one() / F::of(context.len() as f64);
                hidden.iter_mut().for_each(|h| *h = F::zero());
                for &c in &context {
                    for (h, &v) in hidden.iter_mut().zip(input.row(c)) {
                        *h = *h + v * scale;
                    }
                }
                hidden_grad.iter_mut().for_each(|g| *g = F::zero());

                let mut targets = Vec::with_capacity(cfg.negatives + 1);
                targets.push((center, true));
                for _ in 0..cfg.negatives {
                    let r = rng.random::<f64>() * total_weight;
                    let neg = cumulative.partition_point(|&c| c <= r).min(rows - 1);
                    if neg != center {
                        targets.push((neg, false));
                    }
                }
                for (t, label) in targets {
                    let out_row = &mut output[t * dim..(t + 1) * dim];
                    let score = dot(&hidden, out_row);
                    let coeff = if label {
                        loss_sum += softplus(-score).as_f64();
                        sigmoid(score) - F::one()
                    } else {
                        loss_sum += softplus(score).as_f64();
                        sigmoid(score)
                    };
                    for ((g, u), &h) in hidden_grad.iter_mut().zip(out_row.iter_mut()).zip(&hidden) {
                        *g = *g + coeff * *u;
                        *u = *u - lr * coeff * h;
                    }
                }
                loss_terms += 1;
                for &c in &context {
                    for (v, &g) in input.row_mut(c).iter_mut().zip(&hidden_grad) {
                        *v = *v - lr * g * scale;
                    }
                }
            }
        }
        epoch_losses.push(F::of(if loss_terms == 0 { 0.0 } else { loss_sum / loss_terms as f64 }));
    }
    Ok(CbowOutcome {
        embeddings: input,
        epoch_losses,
    })
}
