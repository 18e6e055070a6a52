//! Classical classifiers over feature vectors and evaluation metrics.
//!
//! * [`RandomForest`]: CART trees on bootstrap samples, Gini impurity,
//!   `sqrt(D)` candidate features per split, mean of leaf distributions.
//! * [`LinearModel`]: one-vs-rest L2-regularized hinge-loss models on
//!   z-scored features, trained by dual coordinate descent; probabilities are
//!   a softmax over the class margins.
//!
//! Predicted class is the argmax of the probability vector, lowest class id on ties.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{self, CodecError, Reader, Writer};
use crate::rng::{derive_seed, Stream};
use crate::scalar::{cast, Real};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("feature vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("label {label} outside the {n_classes} known classes")]
    LabelOutOfRange { label: u32, n_classes: usize },
    #[error("non-finite feature value in sample {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

fn check_training<T: Real>(features: &[Vec<T>], labels: &[u32]) -> Result<(usize, usize)> {
    if features.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let dim = features[0].len();
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: dim,
                found: f.len(),
            });
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(ClassifyError::NonFinite(i));
        }
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(ClassifyError::DegenerateLabels);
    }
    let n_classes = *labels.iter().max().unwrap() as usize + 1;
    Ok((dim, n_classes))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((dim as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => dim,
            MaxFeatures::Count(n) => n.clamp(1, dim.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 128,
            max_depth: None,
            min_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: Vec<f64>,
    },
}

/// A single CART tree; node 0 is the root, children always follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Real> DecisionTree<T> {
    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn leaf_distribution(&self, x: &[T]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { probs } => return probs,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

struct TreeBuilder<'a, T> {
    features: &'a [Vec<T>],
    labels: &'a [u32],
    n_classes: usize,
    params: &'a ForestParams,
    mtry: usize,
    rng: Stream,
    nodes: Vec<TreeNode<T>>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c / total) * (c / total)).sum::<f64>()
}

impl<'a, T: Real> TreeBuilder<'a, T> {
    fn leaf(&self, samples: &[usize]) -> TreeNode<T> {
        let mut probs = vec![0.0; self.n_classes];
        for &s in samples {
            probs[self.labels[s] as usize] += 1.0;
        }
        let total = samples.len() as f64;
        probs.iter_mut().for_each(|p| *p /= total);
        TreeNode::Leaf { probs }
    }

    /// Best (weighted child impurity, feature, threshold) among the candidates.
    fn best_split(&mut self, samples: &[usize]) -> Option<(usize, T)> {
        let dim = self.features[0].len();
        let mut order: Vec<usize> = (0..dim).collect();
        let mut best: Option<(f64, usize, T)> = None;
        let mut evaluated = 0;
        let mut scratch: Vec<(T, u32)> = Vec::with_capacity(samples.len());
        let n = samples.len();
        let min_leaf = self.params.min_leaf.max(1);
        // Draw candidate features lazily; constant features do not count toward mtry.
        for pos in 0..dim {
            if evaluated == self.mtry {
                break;
            }
            let j = pos + self.rng.below((dim - pos) as u64) as usize;
            order.swap(pos, j);
            let f = order[pos];
            scratch.clear();
            scratch.extend(samples.iter().map(|&s| (self.features[s][f], self.labels[s])));
            scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            if scratch[0].0 == scratch[n - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left = vec![0.0; self.n_classes];
            let mut right = vec![0.0; self.n_classes];
            for &(_, y) in &scratch {
                right[y as usize] += 1.0;
            }
            for i in 0..n - 1 {
                let y = scratch[i].1 as usize;
                left[y] += 1.0;
                right[y] -= 1.0;
                if scratch[i].0 == scratch[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let score = (nl as f64 * gini(&left, nl as f64) + nr as f64 * gini(&right, nr as f64)) / n as f64;
                if best.as_ref().is_none_or(|b| score < b.0) {
                    let (a, b) = (scratch[i].0, scratch[i + 1].0);
                    let mut t = a + (b - a) / cast::<T>(2.0);
                    if !(t >= a && t < b) {
                        t = a;
                    }
                    best = Some((score, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(mut self, root: Vec<usize>) -> DecisionTree<T> {
        // (node id, samples, depth)
        let mut stack = vec![(0usize, root, 0usize)];
        self.nodes.push(TreeNode::Leaf { probs: Vec::new() });
        while let Some((id, samples, depth)) = stack.pop() {
            let first = self.labels[samples[0]];
            let pure = samples.iter().all(|&s| self.labels[s] == first);
            let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
            let too_small = samples.len() < 2 * self.params.min_leaf.max(1);
            let split = if pure || depth_capped || too_small {
                None
            } else {
                self.best_split(&samples)
            };
            match split {
                None => self.nodes[id] = self.leaf(&samples),
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        samples.iter().partition(|&&s| self.features[s][feature] <= threshold);
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(TreeNode::Leaf { probs: Vec::new() });
                    self.nodes.push(TreeNode::Leaf { probs: Vec::new() });
                    self.nodes[id] = TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        DecisionTree { nodes: self.nodes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest<T> {
    trees: Vec<DecisionTree<T>>,
    n_classes: usize,
    n_features: usize,
    params: ForestParams,
    seed: u64,
}

/// Train a forest. Tree `t` draws from a stream seeded with `derive_seed(seed, t)`.
pub fn fit_random_forest<T: Real>(
    features: &[Vec<T>],
    labels: &[u32],
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest<T>> {
    let (dim, n_classes) = check_training(features, labels)?;
    let mtry = params.max_features.resolve(dim);
    let n = features.len();
    let trees = (0..params.n_trees.max(1))
        .into_par_iter()
        .map(|t| {
            let mut rng = Stream::new(derive_seed(seed, t as u64));
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n as u64) as usize).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder {
                features,
                labels,
                n_classes,
                params,
                mtry,
                rng,
                nodes: Vec::new(),
            }
            .build(samples)
        })
        .collect();
    Ok(RandomForest {
        trees,
        n_classes,
        n_features: dim,
        params: params.clone(),
        seed,
    })
}

impl<T: Real> RandomForest<T> {
    pub fn trees(&self) -> &[DecisionTree<T>] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (a, &p) in acc.iter_mut().zip(tree.leaf_distribution(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// Hinge-loss weight (inverse regularization strength).
    pub c: f64,
    /// Stop when the relative change of the primal objective falls below this.
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

/// Variance below this fraction of (1 + mean²) is treated as zero and the
/// dimension is ignored; it only catches columns that are constant up to rounding.
const VARIANCE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    mean: Vec<f64>,
    /// Reciprocal standard deviation, 0 for ignored dimensions.
    inv_std: Vec<f64>,
    /// Per class: `dim` weights followed by the bias.
    weights: Vec<Vec<f64>>,
    params: LinearParams,
}

fn standardize_stats<T: Real>(features: &[Vec<T>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, &x) in mean.iter_mut().zip(f) {
            *m += x.to_f64_lossy();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in features {
        for ((v, &x), &m) in var.iter_mut().zip(f).zip(&mean) {
            let d = x.to_f64_lossy() - m;
            *v += d * d;
        }
    }
    let inv_std = var
        .iter()
        .zip(&mean)
        .map(|(&v, &m)| {
            let v = v / n;
            if v > VARIANCE_FLOOR * (1.0 + m * m) {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    (mean, inv_std)
}

/// Binary L2-regularized hinge loss, dual coordinate descent; last weight is the bias.
fn train_binary(z: &[Vec<f64>], y: &[f64], params: &LinearParams, seed: u64) -> Vec<f64> {
    let n = z.len();
    let dim = z[0].len();
    let mut w = vec![0.0; dim + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = z.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut rng = Stream::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let objective = |w: &[f64]| -> f64 {
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = z
            .iter()
            .zip(y)
            .map(|(x, &yi)| {
                let m = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
                (1.0 - yi * m).max(0.0)
            })
            .sum();
        reg + params.c * loss
    };
    let mut prev = objective(&w);
    for _ in 0..params.max_epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            let x = &z[i];
            let m = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            let g = y[i] * m - 1.0;
            let new = (alpha[i] - g / q[i]).clamp(0.0, params.c);
            let step = (new - alpha[i]) * y[i];
            if step != 0.0 {
                for (wj, &xj) in w.iter_mut().zip(x) {
                    *wj += step * xj;
                }
                w[dim] += step;
                alpha[i] = new;
            }
        }
        let obj = objective(&w);
        let rel = (prev - obj).abs() / prev.abs().max(1e-12);
        prev = obj;
        if rel < params.tol {
            break;
        }
    }
    w
}

pub fn fit_linear<T: Real>(features: &[Vec<T>], labels: &[u32], params: &LinearParams) -> Result<LinearModel> {
    let (dim, n_classes) = check_training(features, labels)?;
    let (mean, inv_std) = standardize_stats(features, dim);
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.iter()
                .zip(&mean)
                .zip(&inv_std)
                .map(|((&x, &m), &s)| (x.to_f64_lossy() - m) * s)
                .collect()
        })
        .collect();
    let weights = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l as usize == c { 1.0 } else { -1.0 })
                .collect();
            train_binary(&z, &y, params, derive_seed(params.seed, c as u64))
        })
        .collect();
    Ok(LinearModel {
        mean,
        inv_std,
        weights,
        params: params.clone(),
    })
}

impl LinearModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn margins<T: Real>(&self, x: &[T]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((&v, &m), &s)| (v.to_f64_lossy() - m) * s)
            .collect();
        Ok(self
            .weights
            .iter()
            .map(|w| z.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[z.len()])
            .collect())
    }

    pub fn predict_proba<T: Real>(&self, x: &[T]) -> Result<Vec<f64>> {
        let m = self.margins(x)?;
        let top = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = m.iter().map(|v| (v - top).exp()).collect();
        let s: f64 = e.iter().sum();
        Ok(e.into_iter().map(|v| v / s).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierParams {
    Forest(ForestParams),
    Linear(LinearParams),
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams::Forest(ForestParams::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier<T> {
    Forest(RandomForest<T>),
    Linear(LinearModel),
}

impl<T: Real> Classifier<T> {
    pub fn fit(features: &[Vec<T>], labels: &[u32], params: &ClassifierParams, seed: u64) -> Result<Self> {
        Ok(match params {
            ClassifierParams::Forest(p) => Classifier::Forest(fit_random_forest(features, labels, p, seed)?),
            ClassifierParams::Linear(p) => {
                Classifier::Linear(fit_linear(features, labels, &LinearParams { seed, ..p.clone() })?)
            }
        })
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Forest(f) => f.n_classes(),
            Classifier::Linear(l) => l.n_classes(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Forest(f) => f.n_features(),
            Classifier::Linear(l) => l.n_features(),
        }
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<f64>> {
        match self {
            Classifier::Forest(f) => f.predict_proba(x),
            Classifier::Linear(l) => l.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &[T]) -> Result<u32> {
        Ok(argmax(&self.predict_proba(x)?) as u32)
    }

    pub fn predict_many(&self, xs: &[Vec<T>]) -> Result<Vec<u32>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(CLASSIFIER_MAGIC, CLASSIFIER_VERSION);
        match self {
            Classifier::Forest(f) => {
                w.u8(0);
                w.u64(f.n_classes as u64);
                w.u64(f.n_features as u64);
                w.u64(f.params.n_trees as u64);
                w.u64(f.params.max_depth.map_or(u64::MAX, |d| d as u64));
                w.u64(f.params.min_leaf as u64);
                match f.params.max_features {
                    MaxFeatures::Sqrt => w.u64(u64::MAX),
                    MaxFeatures::All => w.u64(u64::MAX - 1),
                    MaxFeatures::Count(n) => w.u64(n as u64),
                }
                w.u8(f.params.bootstrap as u8);
                w.u64(f.seed);
                w.u32(f.trees.len() as u32);
                for t in &f.trees {
                    w.u32(t.nodes.len() as u32);
                    for node in &t.nodes {
                        match node {
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                w.u8(0);
                                w.u32(*feature as u32);
                                w.f64(threshold.to_f64_lossy());
                                w.u32(*left as u32);
                                w.u32(*right as u32);
                            }
                            TreeNode::Leaf { probs } => {
                                w.u8(1);
                                probs.iter().for_each(|&p| w.f64(p));
                            }
                        }
                    }
                }
            }
            Classifier::Linear(l) => {
                w.u8(1);
                w.u64(l.weights.len() as u64);
                w.u64(l.mean.len() as u64);
                w.f64(l.params.c);
                w.f64(l.params.tol);
                w.u64(l.params.max_epochs as u64);
                w.u64(l.params.seed);
                l.mean.iter().for_each(|&x| w.f64(x));
                l.inv_std.iter().for_each(|&x| w.f64(x));
                l.weights.iter().flatten().for_each(|&x| w.f64(x));
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(decode_classifier(bytes)?)
    }
}

pub const CLASSIFIER_MAGIC: &[u8; 4] = b"PHC1";
pub const CLASSIFIER_VERSION: u16 = 1;

fn decode_classifier<T: Real>(bytes: &[u8]) -> codec::Result<Classifier<T>> {
    let mut r = Reader::open(bytes, CLASSIFIER_MAGIC, CLASSIFIER_VERSION)?;
    let invalid = |m: &str| CodecError::Invalid(m.to_string());
    let out = match r.u8()? {
        0 => {
            let n_classes = r.usize()?;
            let n_features = r.usize()?;
            let n_trees = r.usize()?;
            let max_depth = match r.u64()? {
                u64::MAX => None,
                d => Some(d as usize),
            };
            let min_leaf = r.usize()?;
            let max_features = match r.u64()? {
                u64::MAX => MaxFeatures::Sqrt,
                x if x == u64::MAX - 1 => MaxFeatures::All,
                n => MaxFeatures::Count(n as usize),
            };
            let bootstrap = r.u8()? != 0;
            let seed = r.u64()?;
            let count = r.u32()? as usize;
            let mut trees = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let n_nodes = r.u32()? as usize;
                let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => {
                            let feature = r.u32()? as usize;
                            let threshold = cast::<T>(r.f64()?);
                            let left = r.u32()? as usize;
                            let right = r.u32()? as usize;
                            if feature >= n_features || left >= n_nodes || right >= n_nodes {
                                return Err(invalid("tree node out of range"));
                            }
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            }
                        }
                        1 => TreeNode::Leaf {
                            probs: r.f64s(n_classes)?,
                        },
                        _ => return Err(invalid("node tag")),
                    });
                }
                trees.push(DecisionTree { nodes });
            }
            Classifier::Forest(RandomForest {
                trees,
                n_classes,
                n_features,
                params: ForestParams {
                    n_trees,
                    max_depth,
                    min_leaf,
                    max_features,
                    bootstrap,
                },
                seed,
            })
        }
        1 => {
            let n_classes = r.usize()?;
            let dim = r.usize()?;
            let c = r.f64()?;
            let tol = r.f64()?;
            let max_epochs = r.usize()?;
            let seed = r.u64()?;
            let mean = r.f64s(dim)?;
            let inv_std = r.f64s(dim)?;
            let weights = (0..n_classes).map(|_| r.f64s(dim + 1)).collect::<codec::Result<_>>()?;
            Classifier::Linear(LinearModel {
                mean,
                inv_std,
                weights,
                params: LinearParams {
                    c,
                    tol,
                    max_epochs,
                    seed,
                },
            })
        }
        _ => return Err(invalid("classifier kind")),
    };
    if !r.is_done() {
        return Err(invalid("trailing bytes"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Accuracy per class, `None` for classes without test samples.
    pub per_class: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    /// Unweighted mean over classes with at least one test sample.
    pub average_accuracy: f64,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[u32], truth: &[u32], class_names: &[String]) -> Result<Self> {
        if truth.is_empty() {
            return Err(ClassifyError::EmptyTestSet);
        }
        if predicted.len() != truth.len() {
            return Err(ClassifyError::LengthMismatch {
                features: predicted.len(),
                labels: truth.len(),
            });
        }
        let c = class_names.len();
        let mut confusion = vec![vec![0u64; c]; c];
        for (&p, &t) in predicted.iter().zip(truth) {
            for l in [p, t] {
                if l as usize >= c {
                    return Err(ClassifyError::LabelOutOfRange { label: l, n_classes: c });
                }
            }
            confusion[t as usize][p as usize] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let diag: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let per_class: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        Ok(Self {
            class_names: class_names.to_vec(),
            confusion,
            average_accuracy: present.iter().sum::<f64>() / present.len() as f64,
            per_class,
            overall_accuracy: diag as f64 / total as f64,
        })
    }

    /// Classes ordered from lowest to highest accuracy (classes without samples omitted).
    pub fn worst_classes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.per_class.len())
            .filter(|&i| self.per_class[i].is_some())
            .collect();
        idx.sort_by(|&a, &b| {
            self.per_class[a]
                .partial_cmp(&self.per_class[b])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }
}

pub fn evaluate<T: Real>(
    model: &Classifier<T>,
    features: &[Vec<T>],
    labels: &[u32],
    class_names: &[String],
) -> Result<EvalReport> {
    if features.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let predicted = model.predict_many(features)?;
    EvalReport::from_predictions(&predicted, labels, class_names)
}
