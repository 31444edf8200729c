//! LSTM classifier: frozen word embeddings → one LSTM layer → mean of the
//! hidden states → linear layer → 2-way softmax. Trained with Adam on
//! mini-batches, with global-norm clipping and early stopping on a dev split.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::stratified_subsample;
use crate::features::{EmbeddingMatrix, TokenSequence};
use crate::num::sigmoid;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    /// Sequences are cut to this percentile of training lengths.
    pub length_percentile: f64,
    /// Share of the training data held out for early stopping when no dev
    /// set is given.
    pub dev_fraction: f64,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        RecurrentConfig {
            hidden: 200,
            batch_size: 100,
            max_epochs: 50,
            patience: 5,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            length_percentile: 99.0,
            dev_fraction: 0.1,
        }
    }
}

/// Flat parameter vector; gates are stacked in the order input, forget,
/// output, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentParams<F> {
    pub input: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub theta: Vec<F>,
    pub epochs_run: usize,
    pub best_dev_loss: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    d: usize,
    h: usize,
}

impl Layout {
    fn w(&self) -> usize {
        0
    }
    fn u(&self) -> usize {
        4 * self.h * self.d
    }
    fn b(&self) -> usize {
        self.u() + 4 * self.h * self.h
    }
    fn v(&self) -> usize {
        self.b() + 4 * self.h
    }
    fn c(&self) -> usize {
        self.v() + 2 * self.h
    }
    fn len(&self) -> usize {
        self.c() + 2
    }
}

#[derive(Clone, Debug)]
pub struct RecurrentModel<F> {
    pub params: RecurrentParams<F>,
    pub embeddings: Arc<EmbeddingMatrix<F>>,
}

struct Trace<F> {
    rows: Vec<usize>,
    /// Per step: activated gates (4h), cell state (h), hidden state (h).
    gates: Vec<Vec<F>>,
    cells: Vec<Vec<F>>,
    hiddens: Vec<Vec<F>>,
    mean: Vec<F>,
    probs: [F; 2],
}

fn layout_of<F>(p: &RecurrentParams<F>) -> Layout {
    Layout { d: p.input, h: p.hidden }
}

fn softmax2<F: Scalar>(a: F, b: F) -> [F; 2] {
    // p1 = σ(b − a) keeps both entries exact complements
    let p1 = sigmoid(b - a);
    [F::one() - p1, p1]
}

fn forward<F: Scalar>(p: &RecurrentParams<F>, emb: &EmbeddingMatrix<F>, rows: &[usize]) -> Trace<F> {
    let l = layout_of(p);
    let (d, h) = (l.d, l.h);
    let th = &p.theta;
    let mut hprev = vec![F::zero(); h];
    let mut cprev = vec![F::zero(); h];
    let mut trace = Trace {
        rows: rows.to_vec(),
        gates: Vec::with_capacity(rows.len()),
        cells: Vec::with_capacity(rows.len()),
        hiddens: Vec::with_capacity(rows.len()),
        mean: vec![F::zero(); h],
        probs: [F::zero(); 2],
    };
    for &r in rows {
        let x = emb.row(r);
        let mut a = vec![F::zero(); 4 * h];
        for (k, ak) in a.iter_mut().enumerate() {
            let wr = &th[l.w() + k * d..l.w() + (k + 1) * d];
            let ur = &th[l.u() + k * h..l.u() + (k + 1) * h];
            let mut s = th[l.b() + k];
            for (wi, xi) in wr.iter().zip(x) {
                s = s + *wi * *xi;
            }
            for (ui, hi) in ur.iter().zip(&hprev) {
                s = s + *ui * *hi;
            }
            *ak = s;
        }
        for k in 0..3 * h {
            a[k] = sigmoid(a[k]);
        }
        for k in 3 * h..4 * h {
            a[k] = a[k].tanh();
        }
        let mut c = vec![F::zero(); h];
        let mut hn = vec![F::zero(); h];
        for j in 0..h {
            c[j] = a[h + j] * cprev[j] + a[j] * a[3 * h + j];
            hn[j] = a[2 * h + j] * c[j].tanh();
            trace.mean[j] = trace.mean[j] + hn[j];
        }
        trace.gates.push(a);
        trace.cells.push(c.clone());
        trace.hiddens.push(hn.clone());
        hprev = hn;
        cprev = c;
    }
    let t = F::of(rows.len().max(1) as f64);
    trace.mean.iter_mut().for_each(|m| *m = *m / t);
    let mut logits = [th[l.c()], th[l.c() + 1]];
    for (cls, logit) in logits.iter_mut().enumerate() {
        let vr = &th[l.v() + cls * h..l.v() + (cls + 1) * h];
        for (vi, mi) in vr.iter().zip(&trace.mean) {
            *logit = *logit + *vi * *mi;
        }
    }
    trace.probs = softmax2(logits[0], logits[1]);
    trace
}

fn sample_loss<F: Scalar>(probs: &[F; 2], y: bool) -> F {
    let p = probs[y as usize].max(F::prob_eps());
    -p.ln()
}

/// Adds `scale · ∂loss/∂θ` for one sample into `grad`.
fn backward<F: Scalar>(p: &RecurrentParams<F>, emb: &EmbeddingMatrix<F>, tr: &Trace<F>, y: bool, scale: F, grad: &mut [F]) {
    let l = layout_of(p);
    let (d, h) = (l.d, l.h);
    let th = &p.theta;
    let steps = tr.rows.len();
    let mut dlogit = [tr.probs[0], tr.probs[1]];
    dlogit[y as usize] = dlogit[y as usize] - F::one();
    let mut dmean = vec![F::zero(); h];
    for cls in 0..2 {
        let g = dlogit[cls] * scale;
        grad[l.c() + cls] = grad[l.c() + cls] + g;
        for j in 0..h {
            grad[l.v() + cls * h + j] = grad[l.v() + cls * h + j] + g * tr.mean[j];
            dmean[j] = dmean[j] + th[l.v() + cls * h + j] * g;
        }
    }
    let inv_t = F::one() / F::of(steps as f64);
    dmean.iter_mut().for_each(|v| *v = *v * inv_t);

    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    let zero = vec![F::zero(); h];
    let mut da = vec![F::zero(); 4 * h];
    for t in (0..steps).rev() {
        let a = &tr.gates[t];
        let c = &tr.cells[t];
        let cprev = if t > 0 { &tr.cells[t - 1] } else { &zero };
        let hprev = if t > 0 { &tr.hiddens[t - 1] } else { &zero };
        for j in 0..h {
            let (i, f, o, g) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
            let dh = dmean[j] + dh_next[j];
            let tc = c[j].tanh();
            let dc = dc_next[j] + dh * o * (F::one() - tc * tc);
            da[j] = dc * g * i * (F::one() - i);
            da[h + j] = dc * cprev[j] * f * (F::one() - f);
            da[2 * h + j] = dh * tc * o * (F::one() - o);
            da[3 * h + j] = dc * i * (F::one() - g * g);
            dc_next[j] = dc * f;
        }
        let x = emb.row(tr.rows[t]);
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        for (k, &dak) in da.iter().enumerate() {
            if dak == F::zero() {
                continue;
            }
            grad[l.b() + k] = grad[l.b() + k] + dak;
            let gw = &mut grad[l.w() + k * d..l.w() + (k + 1) * d];
            for (gi, xi) in gw.iter_mut().zip(x) {
                *gi = *gi + dak * *xi;
            }
            let gu = &mut grad[l.u() + k * h..l.u() + (k + 1) * h];
            for (gi, hi) in gu.iter_mut().zip(hprev) {
                *gi = *gi + dak * *hi;
            }
            let ur = &th[l.u() + k * h..l.u() + (k + 1) * h];
            for (dn, ui) in dh_next.iter_mut().zip(ur) {
                *dn = *dn + *ui * dak;
            }
        }
    }
}

impl<F: Scalar> RecurrentModel<F> {
    /// Randomly initialized model: uniform(±1/√h) weights, forget-gate bias 1.
    pub fn init(embeddings: Arc<EmbeddingMatrix<F>>, hidden: usize, max_len: usize, seed: u64) -> Self {
        let l = Layout {
            d: embeddings.dim(),
            h: hidden,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut theta: Vec<F> = (0..l.len()).map(|_| F::of(rng.random_range(-bound..bound))).collect();
        for k in 0..4 * hidden {
            theta[l.b() + k] = if (hidden..2 * hidden).contains(&k) { F::one() } else { F::zero() };
        }
        theta[l.c()] = F::zero();
        theta[l.c() + 1] = F::zero();
        RecurrentModel {
            params: RecurrentParams {
                input: l.d,
                hidden,
                max_len,
                theta,
                epochs_run: 0,
                best_dev_loss: None,
            },
            embeddings,
        }
    }

    pub fn from_params(params: RecurrentParams<F>, embeddings: Arc<EmbeddingMatrix<F>>) -> Result<Self, ModelError> {
        let expected = layout_of(&params).len();
        if params.input != embeddings.dim() || params.theta.len() != expected {
            return Err(ModelError::Malformed(format!(
                "recurrent parameters do not fit input {} / hidden {}",
                embeddings.dim(),
                params.hidden
            )));
        }
        Ok(RecurrentModel { params, embeddings })
    }

    /// Output-layer weights and bias set to zero.
    pub fn zero_output(&mut self) {
        let l = layout_of(&self.params);
        for v in &mut self.params.theta[l.v()..] {
            *v = F::zero();
        }
    }

    fn rows(&self, seq: &TokenSequence) -> Result<Vec<usize>, ModelError> {
        let mut rows = self.embeddings.sequence_rows(seq)?;
        if rows.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        rows.truncate(self.params.max_len.max(1));
        Ok(rows)
    }

    /// Both softmax components.
    pub fn predict_distribution(&self, seq: &TokenSequence) -> Result<[F; 2], ModelError> {
        let rows = self.rows(seq)?;
        Ok(forward(&self.params, &self.embeddings, &rows).probs)
    }

    pub fn predict_proba(&self, seq: &TokenSequence) -> Result<F, ModelError> {
        Ok(self.predict_distribution(seq)?[1])
    }

    /// Mean loss over a batch and its gradient with respect to `theta`.
    pub fn loss_and_gradient(&self, batch: &[(Vec<usize>, bool)]) -> (F, Vec<F>) {
        let n = batch.len();
        let scale = F::one() / F::of(n.max(1) as f64);
        let parts: Vec<(F, Vec<F>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![F::zero(); self.params.theta.len()];
                let mut loss = F::zero();
                for (rows, y) in chunk {
                    let tr = forward(&self.params, &self.embeddings, rows);
                    loss = loss + sample_loss(&tr.probs, *y);
                    backward(&self.params, &self.embeddings, &tr, *y, scale, &mut g);
                }
                (loss, g)
            })
            .collect();
        let mut grad = vec![F::zero(); self.params.theta.len()];
        let mut loss = F::zero();
        for (l, g) in parts {
            loss = loss + l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        (loss * scale, grad)
    }

    fn mean_loss(&self, data: &[(Vec<usize>, bool)]) -> f64 {
        let losses: Vec<F> = data
            .par_iter()
            .map(|(rows, y)| sample_loss(&forward(&self.params, &self.embeddings, rows).probs, *y))
            .collect();
        losses.iter().fold(0.0, |acc, l| acc + l.as_f64()) / data.len().max(1) as f64
    }
}

// Fixed chunking keeps the gradient reduction order independent of the
// thread count.
const CHUNK: usize = 8;

struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [F], grad: &[F], cfg: &RecurrentConfig) {
        self.t += 1;
        let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        let lr = F::of(cfg.learning_rate);
        let eps = F::of(cfg.epsilon);
        for k in 0..theta.len() {
            self.m[k] = b1 * self.m[k] + (F::one() - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (F::one() - b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            theta[k] = theta[k] - lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`.
pub fn clip_global_norm<F: Scalar>(grad: &mut [F], max_norm: f64) -> f64 {
    let norm = grad.iter().fold(0.0, |acc, g| acc + g.as_f64() * g.as_f64()).sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = F::of(max_norm / norm);
        grad.iter_mut().for_each(|g| *g = *g * s);
    }
    norm
}

/// Nearest-rank percentile of the lengths.
fn percentile_length(mut lengths: Vec<usize>, pct: f64) -> usize {
    lengths.sort_unstable();
    let rank = ((pct / 100.0) * lengths.len() as f64).ceil() as usize;
    lengths[rank.clamp(1, lengths.len()) - 1]
}

pub fn train_recurrent<F: Scalar>(
    seqs: &[&TokenSequence],
    ys: &[bool],
    dev: Option<(&[&TokenSequence], &[bool])>,
    embeddings: Arc<EmbeddingMatrix<F>>,
    cfg: &RecurrentConfig,
    seed: u64,
) -> Result<RecurrentModel<F>, ModelError> {
    if seqs.len() != ys.len() {
        return Err(ModelError::LengthMismatch {
            left: seqs.len(),
            right: ys.len(),
        });
    }
    if seqs.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(ModelError::InvalidConfig("hidden size, batch size and step must be positive".into()));
    }
    let to_rows = |s: &TokenSequence| -> Result<Vec<usize>, ModelError> {
        let rows = embeddings.sequence_rows(s)?;
        if rows.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        Ok(rows)
    };
    let mut all: Vec<(Vec<usize>, bool)> = Vec::with_capacity(seqs.len());
    for (s, &y) in seqs.iter().zip(ys) {
        all.push((to_rows(s)?, y));
    }
    let (mut train, mut held): (Vec<(Vec<usize>, bool)>, Vec<(Vec<usize>, bool)>) = match dev {
        Some((dx, dy)) => {
            let mut held = Vec::with_capacity(dx.len());
            for (s, &y) in dx.iter().zip(dy) {
                held.push((to_rows(s)?, y));
            }
            (all, held)
        }
        None => {
            let idx: Vec<usize> = (0..all.len()).collect();
            let dev_idx = if all.len() >= 10 {
                stratified_subsample(&idx, ys, cfg.dev_fraction, seed ^ 0xde5)
            } else {
                Vec::new()
            };
            let mut is_dev = vec![false; all.len()];
            dev_idx.iter().for_each(|&i| is_dev[i] = true);
            let mut train = Vec::new();
            let mut held = Vec::new();
            for (i, item) in all.into_iter().enumerate() {
                if is_dev[i] {
                    held.push(item);
                } else {
                    train.push(item);
                }
            }
            (train, held)
        }
    };
    let max_len = percentile_length(train.iter().map(|(r, _)| r.len()).collect(), cfg.length_percentile);
    for (rows, _) in train.iter_mut().chain(held.iter_mut()) {
        rows.truncate(max_len);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = RecurrentModel::init(embeddings, cfg.hidden, max_len, rng.random());
    let mut adam = Adam::new(model.params.theta.len());
    let mut best = (f64::INFINITY, model.params.theta.clone(), 0usize);
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        model.params.epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<usize>, bool)> = batch_idx.iter().map(|&i| train[i].clone()).collect();
            let (_, mut grad) = model.loss_and_gradient(&batch);
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam.step(&mut model.params.theta, &grad, cfg);
        }
        let monitor = if held.is_empty() { &train } else { &held };
        let loss = model.mean_loss(monitor);
        log::debug!("lstm epoch {epoch}: dev loss {loss:.5}");
        if loss < best.0 {
            best = (loss, model.params.theta.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params.theta = best.1;
    model.params.best_dev_loss = best.0.is_finite().then_some(best.0);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_embeddings(vocab: &[&str], dim: usize, seed: u64) -> Arc<EmbeddingMatrix<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..vocab.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Arc::new(EmbeddingMatrix::new(vocab.iter().map(|s| s.to_string()).collect(), dim, data).unwrap())
    }

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::new(tokens.iter().copied())
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let emb = random_embeddings(&["a", "b", "c"], 5, 1);
        let mut m = RecurrentModel::init(emb, 7, 10, 2);
        m.zero_output();
        for s in [seq(&["a"]), seq(&["b", "c", "a"]), seq(&["c"; 30])] {
            assert_eq!(m.predict_proba(&s).unwrap(), 0.5);
        }
    }

    #[test]
    fn softmax_components_sum_to_one() {
        let emb = random_embeddings(&["a", "b", "c"], 5, 1);
        let m = RecurrentModel::init(emb, 6, 10, 3);
        let d = m.predict_distribution(&seq(&["a", "c"])).unwrap();
        assert!((d[0] + d[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_or_unknown_sequences_are_errors() {
        let emb = random_embeddings(&["a"], 3, 1);
        let m = RecurrentModel::init(emb.clone(), 2, 10, 3);
        assert!(matches!(m.predict_proba(&seq(&[])), Err(ModelError::EmptySequence)));
        assert!(m.predict_proba(&seq(&["zzz"])).is_err());
        let empty = seq(&[]);
        let r = train_recurrent(&[&empty, &seq(&["a"])], &[true, false], None, emb, &RecurrentConfig::default(), 0);
        assert!(matches!(r, Err(ModelError::EmptySequence)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let vocab = ["w0", "w1", "w2", "w3", "w4"];
        let emb = random_embeddings(&vocab, 3, 5);
        let mut m = RecurrentModel::init(emb, 4, 4, 6);
        // make the output layer non-trivial
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        m.params.theta.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        let batch = vec![(vec![0, 3, 1, 4], true), (vec![2, 2, 0, 1], false)];
        let (_, grad) = m.loss_and_gradient(&batch);
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..m.params.theta.len() {
            let orig = m.params.theta[k];
            m.params.theta[k] = orig + eps;
            let (lp, _) = m.loss_and_gradient(&batch);
            m.params.theta[k] = orig - eps;
            let (lm, _) = m.loss_and_gradient(&batch);
            m.params.theta[k] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let denom = fd.abs().max(grad[k].abs());
            if denom > 1e-7 {
                worst = worst.max((fd - grad[k]).abs() / denom);
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn learns_a_marker_token() {
        let vocab: Vec<String> = (0..12).map(|i| format!("t{i}")).chain(["MARK".to_string()]).collect();
        let vocab_refs: Vec<&str> = vocab.iter().map(|s| s.as_str()).collect();
        let emb = random_embeddings(&vocab_refs, 8, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut seqs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..200 {
            let len = rng.random_range(3..10);
            let mut toks: Vec<String> = (0..len).map(|_| format!("t{}", rng.random_range(0..12))).collect();
            let y = i % 2 == 0;
            if y {
                let at = rng.random_range(0..len);
                toks[at] = "MARK".into();
            }
            seqs.push(TokenSequence::new(toks));
            ys.push(y);
        }
        let (train_x, test_x) = seqs.split_at(150);
        let (train_y, test_y) = ys.split_at(150);
        let cfg = RecurrentConfig {
            hidden: 16,
            batch_size: 16,
            learning_rate: 0.01,
            ..RecurrentConfig::default()
        };
        let refs: Vec<&TokenSequence> = train_x.iter().collect();
        let m = train_recurrent(&refs, train_y, None, emb, &cfg, 4).unwrap();
        let correct = test_x
            .iter()
            .zip(test_y)
            .filter(|(s, &y)| (m.predict_proba(s).unwrap() > 0.5) == y)
            .count();
        let acc = correct as f64 / test_x.len() as f64;
        assert!(acc >= 0.95, "held-out accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let emb = random_embeddings(&["a", "b", "c", "d"], 4, 1);
        let seqs: Vec<TokenSequence> = (0..30)
            .map(|i| seq(if i % 3 == 0 { &["a", "b"] } else { &["c", "d", "c"] }))
            .collect();
        let ys: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let refs: Vec<&TokenSequence> = seqs.iter().collect();
        let cfg = RecurrentConfig {
            hidden: 5,
            batch_size: 7,
            max_epochs: 3,
            ..RecurrentConfig::default()
        };
        let a = train_recurrent(&refs, &ys, None, emb.clone(), &cfg, 9).unwrap();
        let b = train_recurrent(&refs, &ys, None, emb, &cfg, 9).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let lengths: Vec<usize> = (1..=100).collect();
        assert_eq!(percentile_length(lengths.clone(), 99.0), 99);
        assert_eq!(percentile_length(lengths, 100.0), 100);
        assert_eq!(percentile_length(vec![4], 99.0), 4);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
