//! Log-linear model `p(y | x, theta) = exp(theta^T f_x(y)) / Z_x(theta)`.
//!
//! Class indices are 0-based everywhere in this crate. Loaders and the CLI
//! convert from the 1-based labels used in files.
//!
//! The training objective is averaged over samples:
//! `L(theta) = (1/T) sum_t [log Z_{x_t}(theta) - theta^T f_{x_t}(y_t)] + (lambda/2) ||theta||^2`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{self, dot, exp, log_sum_exp};

/// How a raw input `x in R^p` and a class `y` are turned into `f_x(y) in R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMap {
    /// `x` placed in block `y` of an `n * p` vector, zeros elsewhere.
    BlockOneHot { n_classes: usize, input_dim: usize },
    /// Two classes with `f_x(0) = x`, `f_x(1) = -x`; `d = p`.
    IdentityBinary { input_dim: usize },
}

impl FeatureMap {
    pub fn block_one_hot(n_classes: usize, input_dim: usize) -> Self {
        FeatureMap::BlockOneHot {
            n_classes,
            input_dim,
        }
    }

    pub fn n_classes(&self) -> usize {
        match *self {
            FeatureMap::BlockOneHot { n_classes, .. } => n_classes,
            FeatureMap::IdentityBinary { .. } => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            FeatureMap::BlockOneHot { input_dim, .. }
            | FeatureMap::IdentityBinary { input_dim } => input_dim,
        }
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match *self {
            FeatureMap::BlockOneHot {
                n_classes,
                input_dim,
            } => n_classes * input_dim,
            FeatureMap::IdentityBinary { input_dim } => input_dim,
        }
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class < self.n_classes() {
            Ok(())
        } else {
            Err(Error::domain(alloc::format!(
                "class {class} out of range for {} classes",
                self.n_classes()
            )))
        }
    }

    pub fn feature_vector(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        self.check_class(class)?;
        let mut out = vec![0.0; self.dim()];
        self.add_feature(1.0, x, class, &mut out);
        Ok(out)
    }

    /// `theta^T f_x(class)` without materializing the feature vector.
    pub fn score(&self, theta: &[f64], x: &[f64], class: usize) -> f64 {
        match *self {
            FeatureMap::BlockOneHot { input_dim, .. } => {
                dot(&theta[class * input_dim..(class + 1) * input_dim], x)
            }
            FeatureMap::IdentityBinary { .. } => {
                let s = dot(theta, x);
                if class == 0 {
                    s
                } else {
                    -s
                }
            }
        }
    }

    /// `out += w * f_x(class)`
    pub fn add_feature(&self, w: f64, x: &[f64], class: usize, out: &mut [f64]) {
        match *self {
            FeatureMap::BlockOneHot { input_dim, .. } => {
                math::axpy(w, x, &mut out[class * input_dim..(class + 1) * input_dim]);
            }
            FeatureMap::IdentityBinary { .. } => {
                let w = if class == 0 { w } else { -w };
                math::axpy(w, x, out);
            }
        }
    }

    pub fn scores(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.n_classes())
            .map(|c| self.score(theta, x, c))
            .collect()
    }

    /// All `n` feature vectors for one input.
    pub fn feature_list(&self, x: &[f64]) -> FeatureList {
        let d = self.dim();
        let n = self.n_classes();
        let mut data = vec![0.0; n * d];
        for (c, row) in data.chunks_exact_mut(d).enumerate() {
            self.add_feature(1.0, x, c, row);
        }
        FeatureList { n, d, data }
    }
}

/// The `n` feature vectors `f_x(0), ..., f_x(n-1)` of one observation,
/// row-major `n x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureList {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl FeatureList {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::domain("feature list needs n >= 1 and d >= 1"));
        }
        check_len(n * d, data.len())?;
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            check_len(d, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.d..(y + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn scores(&self, theta: &[f64]) -> Vec<f64> {
        self.rows().map(|f| dot(theta, f)).collect()
    }

    /// `log Z = log sum_y exp(theta^T f(y))`, max-shifted.
    pub fn log_partition(&self, theta: &[f64]) -> f64 {
        log_sum_exp(&self.scores(theta))
    }

    /// Softmax-weighted feature mean, which is the gradient of `log Z`.
    pub fn softmax_mean(&self, theta: &[f64]) -> Vec<f64> {
        let probs = softmax(&self.scores(theta));
        let mut mean = vec![0.0; self.d];
        for (p, f) in probs.iter().zip(self.rows()) {
            math::axpy(*p, f, &mut mean);
        }
        mean
    }
}

/// Training data: a dense `T x p` feature matrix and 0-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    input_dim: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        input_dim: usize,
    ) -> Result<Self> {
        if labels.is_empty() || n_classes == 0 || input_dim == 0 {
            return Err(Error::domain("dataset needs T >= 1, n >= 1, p >= 1"));
        }
        check_len(labels.len() * input_dim, features.len())?;
        if let Some(bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::domain(alloc::format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite feature value"));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks_exact(self.input_dim)
            .zip(self.labels.iter().copied())
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.n_classes, self.input_dim)
    }

    /// Largest squared row norm `max_t ||x_t||^2`.
    pub fn max_sq_norm(&self) -> f64 {
        self.features
            .chunks_exact(self.input_dim)
            .map(|x| dot(x, x))
            .fold(0.0, f64::max)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| exp(s - lse)).collect()
}

pub fn log_partition(theta: &[f64], x: &[f64], map: &FeatureMap) -> f64 {
    log_sum_exp(&map.scores(theta, x))
}

pub fn predict_proba(theta: &[f64], x: &[f64], map: &FeatureMap) -> Vec<f64> {
    softmax(&map.scores(theta, x))
}

/// `log Z_x(theta) - theta^T f_x(y)` for one sample, without regularization.
pub fn sample_nll(theta: &[f64], x: &[f64], y: usize, map: &FeatureMap) -> f64 {
    log_partition(theta, x, map) - map.score(theta, x, y)
}

/// Averaged regularized objective `L(theta)`.
pub fn regularized_loss(
    theta: &[f64],
    data: &LabeledDataset,
    lambda: f64,
    map: &FeatureMap,
) -> Result<f64> {
    check_len(map.dim(), theta.len())?;
    if data.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    Ok(mean_nll(theta, data, map) + 0.5 * lambda * dot(theta, theta))
}

/// Mean unregularized negative log-likelihood.
pub fn mean_nll(theta: &[f64], data: &LabeledDataset, map: &FeatureMap) -> f64 {
    let total: f64 = data.iter().map(|(x, y)| sample_nll(theta, x, y, map)).sum();
    total / data.len() as f64
}

/// Fraction of samples whose highest-scoring class is the label.
pub fn accuracy(theta: &[f64], data: &LabeledDataset, map: &FeatureMap) -> f64 {
    let hits = data
        .iter()
        .filter(|&(x, y)| {
            let scores = map.scores(theta, x);
            let best = scores
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &s)| {
                        if s > acc.1 {
                            (i, s)
                        } else {
                            acc
                        }
                    },
                )
                .0;
            best == y
        })
        .count();
    hits as f64 / data.len() as f64
}

/// Gradient of the per-sample regularized loss:
/// `E_{p(.|x,theta)}[f_x] - f_x(y) + lambda * theta`.
pub fn sample_gradient(
    theta: &[f64],
    x: &[f64],
    y: usize,
    lambda: f64,
    map: &FeatureMap,
) -> Result<Vec<f64>> {
    check_len(map.dim(), theta.len())?;
    check_len(map.input_dim(), x.len())?;
    map.check_class(y)?;
    let mut grad: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
    add_nll_gradient(theta, x, y, 1.0, map, &mut grad);
    Ok(grad)
}

/// `out += w * (E_p[f_x] - f_x(y))`
pub(crate) fn add_nll_gradient(
    theta: &[f64],
    x: &[f64],
    y: usize,
    w: f64,
    map: &FeatureMap,
    out: &mut [f64],
) {
    let probs = predict_proba(theta, x, map);
    for (c, p) in probs.iter().enumerate() {
        map.add_feature(w * p, x, c, out);
    }
    map.add_feature(-w, x, y, out);
}

/// Gradient of the averaged regularized objective.
pub fn loss_gradient(
    theta: &[f64],
    data: &LabeledDataset,
    lambda: f64,
    map: &FeatureMap,
) -> Result<Vec<f64>> {
    check_len(map.dim(), theta.len())?;
    let w = 1.0 / data.len() as f64;
    let mut grad: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
    for (x, y) in data.iter() {
        add_nll_gradient(theta, x, y, w, map, &mut grad);
    }
    Ok(grad)
}
