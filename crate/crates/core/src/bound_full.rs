//! Dense quadratic bound on a partition function.
//!
//! For an expansion point `theta~` and feature vectors `f(0..n)`, the builder
//! returns `(log z, mu, Sigma)` with
//!
//! `log Z(theta) <= log z + (theta - theta~)^T mu + 1/2 (theta - theta~)^T Sigma (theta - theta~)`
//!
//! for every `theta`, with equality (value and gradient) at `theta = theta~`.
//! Labels are absorbed in ascending order; the first one is the exact
//! `z -> 0+` limit (`mu = f(0)`, `Sigma = 0`) and every later one applies
//!
//! ```text
//! u     = log(alpha / z)               (alpha = exp(theta~^T f(y)), z = running sum)
//! beta  = tanh(u / 2) / (2 u)
//! l     = f(y) - mu
//! Sigma += beta l l^T
//! mu    += alpha / (z + alpha) * l
//! z     += alpha
//! ```
//!
//! `z` is tracked as `log z`. The resulting `Sigma` depends on label order;
//! the bound is valid for any order.

use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::SymMat;
use crate::linear_model::FeatureList;
use crate::math::{self, abs, dot, log_add_exp, sigmoid, tanh};

/// Below this `|u|` the curvature weight uses its Taylor series.
const BETA_SERIES_CUTOFF: f64 = 1e-6;

/// `tanh(u/2) / (2u)`, with the removable singularity at `u = 0` filled by
/// `1/4 - u^2/48`. Even in `u`, maximal (`1/4`) at zero.
pub fn curvature_weight(u: f64) -> f64 {
    if abs(u) < BETA_SERIES_CUTOFF {
        0.25 - u * u / 48.0
    } else {
        tanh(0.5 * u) / (2.0 * u)
    }
}

/// The bound `(log z, mu, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub log_z: f64,
    pub mu: Vec<f64>,
    pub sigma: SymMat,
}

impl BoundParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Knobs that only exist for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Flip the sign of every curvature weight. Produces an invalid bound;
    /// used to check that the validity suite catches a broken builder.
    #[doc(hidden)]
    pub negate_beta: bool,
}

/// A bound together with the curvature weight used at each label after the first.
#[derive(Debug, Clone)]
pub struct TracedBound {
    pub bound: BoundParams,
    pub betas: Vec<f64>,
}

pub fn build_bound(theta_tilde: &[f64], features: &FeatureList) -> Result<BoundParams> {
    Ok(build_bound_traced(theta_tilde, features, BuildOptions::default())?.bound)
}

pub fn build_bound_traced(
    theta_tilde: &[f64],
    features: &FeatureList,
    opts: BuildOptions,
) -> Result<TracedBound> {
    let d = features.dim();
    check_len(d, theta_tilde.len())?;
    if theta_tilde.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("non-finite expansion point"));
    }
    let mut rows = features.rows();
    let first = rows
        .next()
        .ok_or_else(|| Error::domain("bound needs at least one label"))?;

    let mut log_z = dot(theta_tilde, first);
    let mut mu = first.to_vec();
    let mut sigma = SymMat::zeros(d);
    let mut betas = Vec::with_capacity(features.n().saturating_sub(1));
    let mut l = alloc::vec![0.0; d];

    for f in rows {
        let score = dot(theta_tilde, f);
        let u = score - log_z;
        let mut beta = curvature_weight(u);
        if opts.negate_beta {
            beta = -beta;
        }
        betas.push(beta);
        for ((li, fi), mi) in l.iter_mut().zip(f).zip(&mu) {
            *li = fi - mi;
        }
        sigma.rank_one_upper(beta, &l);
        // alpha / (z + alpha) = sigmoid(log alpha - log z)
        math::axpy(sigmoid(u), &l, &mut mu);
        log_z = log_add_exp(log_z, score);
    }
    sigma.mirror_upper();
    Ok(TracedBound {
        bound: BoundParams { log_z, mu, sigma },
        betas,
    })
}

/// `log z + Delta^T mu + 1/2 Delta^T Sigma Delta` with `Delta = theta - theta~`.
pub fn bound_value(b: &BoundParams, theta: &[f64], theta_tilde: &[f64]) -> Result<f64> {
    check_len(b.dim(), theta.len())?;
    check_len(b.dim(), theta_tilde.len())?;
    let delta: Vec<f64> = theta.iter().zip(theta_tilde).map(|(a, c)| a - c).collect();
    Ok(b.log_z + dot(&delta, &b.mu) + 0.5 * b.sigma.quad_form(&delta))
}

/// Element-wise sums `(sum_j Sigma_j, sum_j mu_j)`.
pub fn batch_accumulate(bounds: &[BoundParams]) -> Result<(SymMat, Vec<f64>)> {
    let first = bounds
        .first()
        .ok_or_else(|| Error::domain("cannot accumulate an empty batch"))?;
    let mut sigma = first.sigma.clone();
    let mut mu = first.mu.clone();
    for b in &bounds[1..] {
        check_len(mu.len(), b.dim())?;
        sigma.add_assign(&b.sigma)?;
        math::axpy(1.0, &b.mu, &mut mu);
    }
    Ok((sigma, mu))
}

/// `||mu - sum_y softmax_y(theta~^T f) f(y)||_inf`. Zero up to roundoff for
/// any bound built from the same inputs.
pub fn softmax_mean_check(
    b: &BoundParams,
    theta_tilde: &[f64],
    features: &FeatureList,
) -> Result<f64> {
    check_len(b.dim(), features.dim())?;
    check_len(b.dim(), theta_tilde.len())?;
    let mean = features.softmax_mean(theta_tilde);
    Ok(b.mu
        .iter()
        .zip(&mean)
        .map(|(a, m)| abs(a - m))
        .fold(0.0, f64::max))
}
