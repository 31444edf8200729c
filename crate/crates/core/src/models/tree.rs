//! CART decision trees (Gini impurity) and bagged random forests.
//!
//! Split quality is compared exactly in integer arithmetic over (bootstrap)
//! sample weights, so the chosen split never depends on rounding or on the
//! order of the training samples. Ties go to the lowest feature index, then the
//! lowest threshold.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_set, ModelError};
use crate::features::SparseVector;
use crate::num::derive_seed;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features drawn per split; `None` considers every feature.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 90,
            max_depth: 15,
            max_features: Some(300),
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<F> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
    Leaf {
        positive: u64,
        negative: u64,
        probability: F,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel<F> {
    pub dim: usize,
    /// Root at index 0.
    pub nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> TreeModel<F> {
    pub fn leaf(positive: u64, negative: u64) -> Self {
        TreeModel {
            dim: 0,
            nodes: vec![leaf_node(positive, negative)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Leaf reached by `x` (`x_j ≤ threshold` goes left).
    pub fn leaf_of(&self, x: &SparseVector<F>) -> &TreeNode<F> {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x.get(*feature) <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn predict_proba(&self, x: &SparseVector<F>) -> F {
        match self.leaf_of(x) {
            TreeNode::Leaf { probability, .. } => *probability,
            TreeNode::Split { .. } => unreachable!("traversal ends at a leaf"),
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk<F>(nodes: &[TreeNode<F>], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

fn leaf_node<F: Scalar>(positive: u64, negative: u64) -> TreeNode<F> {
    let total = positive + negative;
    TreeNode::Leaf {
        positive,
        negative,
        probability: if total == 0 {
            F::zero()
        } else {
            F::of(positive as f64 / total as f64)
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<F> {
    pub trees: Vec<TreeModel<F>>,
    pub seeds: Vec<u64>,
}

impl<F: Scalar> ForestModel<F> {
    pub fn dim(&self) -> usize {
        self.trees.first().map_or(0, |t| t.dim())
    }

    pub fn predict_proba(&self, x: &SparseVector<F>) -> F {
        if self.trees.is_empty() {
            return F::zero();
        }
        let sum = self.trees.iter().fold(F::zero(), |acc, t| acc + t.predict_proba(x));
        sum / F::of(self.trees.len() as f64)
    }
}

/// Children score `Σ_c (pos_c² + neg_c²) / n_c` as an exact fraction; larger
/// means lower weighted Gini impurity.
#[derive(Clone, Copy, Debug)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(lp: u64, ln: u64, rp: u64, rn: u64) -> Self {
        let (lp, ln, rp, rn) = (lp as u128, ln as u128, rp as u128, rn as u128);
        let (nl, nr) = (lp + ln, rp + rn);
        SplitScore {
            num: (lp * lp + ln * ln) * nr + (rp * rp + rn * rn) * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Split<F> {
    feature: usize,
    threshold: F,
    score: SplitScore,
}

struct Builder<'a, F> {
    xs: &'a [&'a SparseVector<F>],
    ys: &'a [bool],
    max_depth: usize,
    max_features: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode<F>>,
}

/// Distinct values of one feature inside a node with their class weights.
struct FeatureColumn<F> {
    feature: usize,
    groups: Vec<(F, u64, u64)>,
}

impl<F: Scalar> Builder<'_, F> {
    fn columns(&self, samples: &[(usize, u64)], pos: u64, neg: u64) -> Vec<FeatureColumn<F>> {
        let mut entries: Vec<(usize, F, u64, bool)> = Vec::new();
        for &(s, w) in samples {
            for (j, v) in self.xs[s].iter() {
                entries.push((j, v, w, self.ys[s]));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)));
        let mut out = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let feature = entries[start].0;
            let mut end = start;
            while end < entries.len() && entries[end].0 == feature {
                end += 1;
            }
            let mut groups: Vec<(F, u64, u64)> = Vec::new();
            let (mut nz_pos, mut nz_neg) = (0, 0);
            for &(_, v, w, y) in &entries[start..end] {
                let (p, n) = if y { (w, 0) } else { (0, w) };
                nz_pos += p;
                nz_neg += n;
                match groups.last_mut() {
                    Some(g) if g.0 == v => {
                        g.1 += p;
                        g.2 += n;
                    }
                    _ => groups.push((v, p, n)),
                }
            }
            let (zp, zn) = (pos - nz_pos, neg - nz_neg);
            if zp + zn > 0 {
                let at = groups.partition_point(|g| g.0 < F::zero());
                groups.insert(at, (F::zero(), zp, zn));
            }
            if groups.len() > 1 {
                out.push(FeatureColumn { feature, groups });
            }
            start = end;
        }
        out
    }

    fn best_split(&mut self, samples: &[(usize, u64)], pos: u64, neg: u64) -> Option<Split<F>> {
        let mut columns = self.columns(samples, pos, neg);
        if let Some(m) = self.max_features {
            if columns.len() > m {
                columns.shuffle(&mut self.rng);
                columns.truncate(m);
                columns.sort_by_key(|c| c.feature);
            }
        }
        let mut best: Option<Split<F>> = None;
        let half = F::of(0.5);
        for col in &columns {
            let (mut lp, mut ln) = (0, 0);
            for k in 0..col.groups.len() - 1 {
                lp += col.groups[k].1;
                ln += col.groups[k].2;
                let score = SplitScore::new(lp, ln, pos - lp, neg - ln);
                if best.as_ref().is_none_or(|b| score.beats(&b.score)) {
                    let (lo, hi) = (col.groups[k].0, col.groups[k + 1].0);
                    let mut threshold = lo * half + hi * half;
                    if threshold >= hi || threshold < lo {
                        threshold = lo;
                    }
                    best = Some(Split {
                        feature: col.feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<(usize, u64)>, depth: usize) -> usize {
        let (mut pos, mut neg) = (0, 0);
        for &(s, w) in &samples {
            if self.ys[s] {
                pos += w;
            } else {
                neg += w;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(leaf_node(pos, neg));
        if depth >= self.max_depth || pos == 0 || neg == 0 || pos + neg < 2 {
            return id;
        }
        let Some(split) = self.best_split(&samples, pos, neg) else {
            return id;
        };
        let (left, right): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|&(s, _)| self.xs[s].get(split.feature) <= split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

fn grow_tree<F: Scalar>(
    xs: &[&SparseVector<F>],
    ys: &[bool],
    samples: Vec<(usize, u64)>,
    max_depth: usize,
    max_features: Option<usize>,
    seed: u64,
) -> TreeModel<F> {
    let mut b = Builder {
        xs,
        ys,
        max_depth,
        max_features,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.grow(samples, 0);
    TreeModel {
        dim: xs.first().map_or(0, |x| x.dim()),
        nodes: b.nodes,
    }
}

fn check_nonempty<F: Scalar>(xs: &[&SparseVector<F>], ys: &[bool]) -> Result<(), ModelError> {
    match check_training_set(xs.iter().map(|x| x.dim()), ys) {
        Ok(_) | Err(ModelError::SingleClass) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Single-class data is allowed and yields a single leaf.
pub fn train_tree<F: Scalar>(xs: &[&SparseVector<F>], ys: &[bool], cfg: &TreeConfig) -> Result<TreeModel<F>, ModelError> {
    check_nonempty(xs, ys)?;
    let samples = (0..xs.len()).map(|s| (s, 1)).collect();
    Ok(grow_tree(xs, ys, samples, cfg.max_depth, None, 0))
}

const FOREST_STREAM: u64 = 0x7265_6573;

pub fn train_forest<F: Scalar>(
    xs: &[&SparseVector<F>],
    ys: &[bool],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<ForestModel<F>, ModelError> {
    check_nonempty(xs, ys)?;
    if cfg.n_trees == 0 || cfg.max_features == Some(0) {
        return Err(ModelError::InvalidConfig("a forest needs at least one tree and one candidate feature".into()));
    }
    let n = xs.len();
    let seeds: Vec<u64> = (0..cfg.n_trees as u64).map(|t| derive_seed(seed, FOREST_STREAM, t)).collect();
    let trees = seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let samples: Vec<(usize, u64)> = if cfg.bootstrap {
                let mut counts = vec![0u64; n];
                for _ in 0..n {
                    counts[rand::Rng::random_range(&mut rng, 0..n)] += 1;
                }
                counts.into_iter().enumerate().filter(|&(_, c)| c > 0).collect()
            } else {
                (0..n).map(|s| (s, 1)).collect()
            };
            grow_tree(xs, ys, samples, cfg.max_depth, cfg.max_features, rand::Rng::random(&mut rng))
        })
        .collect();
    Ok(ForestModel { trees, seeds })
}
