//! Parameter updates built on the partition-function bounds, the SGD
//! baseline, learning-rate schedules and the convergence constants for the
//! stochastic bound method.
//!
//! All updates have the shape `theta - eta * P^{-1} (mu - f_true + lambda theta)`
//! where `P` is `Sigma + lambda I` (dense, solved by Cholesky) or
//! `V^T S V + D + lambda I` (solved by Woodbury).

use alloc::vec::Vec;

use crate::bound_full::{build_bound, curvature_weight, BoundParams};
use crate::bound_lowrank::{woodbury_solve, LowRankBound};
use crate::error::{check_len, Error, Result};
use crate::linalg::{Cholesky, SymMat};
use crate::linear_model::{FeatureMap, LabeledDataset};
use crate::math::{self, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// `eta_t = eta_0 / t`
    InvT,
    Constant,
}

pub fn lr_at(eta0: f64, schedule: Schedule, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::domain("steps are counted from 1"));
    }
    Ok(match schedule {
        Schedule::InvT => eta0 / t as f64,
        Schedule::Constant => eta0,
    })
}

/// `theta - eta * (sigma + lambda I)^{-1} direction`.
pub fn preconditioned_step(
    theta: &[f64],
    sigma: &SymMat,
    direction: &[f64],
    eta: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_len(sigma.dim(), theta.len())?;
    check_len(sigma.dim(), direction.len())?;
    let mut system = sigma.clone();
    system.add_diagonal(lambda);
    let v = Cholesky::factor(&system)?.solve(direction)?;
    Ok(theta.iter().zip(&v).map(|(t, vi)| t - eta * vi).collect())
}

fn bound_direction(mu: &[f64], f_true: &[f64], theta: &[f64], lambda: f64) -> Vec<f64> {
    mu.iter()
        .zip(f_true)
        .zip(theta)
        .map(|((m, f), t)| m - f + lambda * t)
        .collect()
}

/// One stochastic bound step `theta - eta (Sigma + lambda I)^{-1} (mu - f + lambda theta)`.
pub fn spfb_step(
    theta: &[f64],
    bound: &BoundParams,
    f_true: &[f64],
    eta: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_len(bound.dim(), f_true.len())?;
    check_len(bound.dim(), theta.len())?;
    let dir = bound_direction(&bound.mu, f_true, theta, lambda);
    preconditioned_step(theta, &bound.sigma, &dir, eta, lambda)
}

/// Low-rank step: `theta - eta (V^T S V + D + lambda I)^{-1} (mu - f + lambda theta)`.
pub fn lspfb_step(
    theta: &[f64],
    state: &LowRankBound,
    f_true: &[f64],
    eta: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_len(state.dim(), f_true.len())?;
    check_len(state.dim(), theta.len())?;
    let dir = bound_direction(&state.mu, f_true, theta, lambda);
    let diag: Vec<f64> = state.diag.iter().map(|x| x + lambda).collect();
    let v = woodbury_solve(&state.v, &state.s, &diag, &dir)?;
    Ok(theta.iter().zip(&v).map(|(t, vi)| t - eta * vi).collect())
}

/// Per-sample bounds at `theta` for the listed rows, averaged: returns
/// `(mean Sigma_j, mean (mu_j - f_{x_j}(y_j)))`.
pub fn averaged_bound(
    theta: &[f64],
    data: &LabeledDataset,
    rows: &[usize],
    map: &FeatureMap,
) -> Result<(SymMat, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let d = map.dim();
    check_len(d, theta.len())?;
    let mut sigma = SymMat::zeros(d);
    let mut dir = alloc::vec![0.0; d];
    for &i in rows {
        let x = data.x(i);
        let b = build_bound(theta, &map.feature_list(x))?;
        sigma.add_assign(&b.sigma)?;
        math::axpy(1.0, &b.mu, &mut dir);
        map.add_feature(-1.0, x, data.label(i), &mut dir);
    }
    let w = 1.0 / rows.len() as f64;
    sigma.scale(w);
    for x in &mut dir {
        *x *= w;
    }
    Ok((sigma, dir))
}

/// Full-batch bound step on the averaged objective:
/// `theta - eta (mean Sigma_j + lambda I)^{-1} (mean [mu_j - f_j] + lambda theta)`.
///
/// With `eta = 1` this minimizes the quadratic majorizer of `L`, so the loss
/// never increases.
pub fn pfb_batch_step(
    theta: &[f64],
    data: &LabeledDataset,
    eta: f64,
    lambda: f64,
    map: &FeatureMap,
) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let (sigma, mut dir) = averaged_bound(theta, data, &rows, map)?;
    math::axpy(lambda, theta, &mut dir);
    preconditioned_step(theta, &sigma, &dir, eta, lambda)
}

pub fn sgd_step(theta: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_len(theta.len(), grad.len())?;
    Ok(theta.iter().zip(grad).map(|(t, g)| t - eta * g).collect())
}

/// Constants of the `O(1/t)` guarantee for the stochastic bound method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub max_sq_norm: f64,
    /// Lower end of the preconditioner bracket, `1 / (sqrt(n/2) max||x||^2 + lambda)`.
    pub mu1: f64,
    /// Upper end, `1 / ((1 + 1/n) beta(log 1/n) max||x||^2 + lambda)`.
    pub mu2: f64,
    /// Strong convexity of `L`; `lambda`.
    pub lambda1: f64,
    /// Smoothness of `L`.
    pub lambda2: f64,
    /// Step scale threshold `1 / (2 mu1 lambda1)`; `eta0` must exceed it.
    pub eta0_min: f64,
    pub sigma_sq: f64,
    pub eta0: f64,
    pub initial_gap: f64,
    /// `max{lambda2 mu2^2 eta0^2 sigma^2 / (2 (2 mu1 lambda1 eta0 - 1)), initial_gap}`,
    /// infinite when `eta0 <= eta0_min`.
    pub q: f64,
}

/// Evaluates the convergence constants for `data` under `map`.
///
/// `lambda2` is `lambda` plus a curvature bound on the log-partition: the
/// Hessian of `log Z_x` is a feature covariance, and the variance of any
/// projection of a set of points with diameter `D` is at most `D^2 / 4`.
pub fn theory_constants(
    data: &LabeledDataset,
    map: &FeatureMap,
    lambda: f64,
    sigma_sq: f64,
    eta0: f64,
    initial_gap: f64,
) -> Result<TheoryConstants> {
    let n = map.n_classes();
    if n < 2 {
        return Err(Error::domain("convergence constants need n >= 2 classes"));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain("convergence constants need lambda > 0"));
    }
    let nf = n as f64;
    let m = data.max_sq_norm();
    let mu1 = 1.0 / (sqrt(nf / 2.0) * m + lambda);
    let beta_min = curvature_weight(math::ln(1.0 / nf));
    let mu2 = 1.0 / ((1.0 + 1.0 / nf) * beta_min * m + lambda);

    let mut max_diam_sq = 0.0f64;
    for (x, _) in data.iter() {
        let feats = map.feature_list(x);
        for a in 0..n {
            for b in (a + 1)..n {
                let dsq: f64 = feats
                    .row(a)
                    .iter()
                    .zip(feats.row(b))
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                max_diam_sq = max_diam_sq.max(dsq);
            }
        }
    }
    let lambda1 = lambda;
    let lambda2 = lambda + 0.25 * max_diam_sq;
    let eta0_min = 1.0 / (2.0 * mu1 * lambda1);
    let denom = 2.0 * mu1 * lambda1 * eta0 - 1.0;
    let q = if denom > 0.0 {
        let noise = lambda2 * mu2 * mu2 * eta0 * eta0 * sigma_sq / (2.0 * denom);
        noise.max(initial_gap)
    } else {
        f64::INFINITY
    };
    Ok(TheoryConstants {
        max_sq_norm: m,
        mu1,
        mu2,
        lambda1,
        lambda2,
        eta0_min,
        sigma_sq,
        eta0,
        initial_gap,
        q,
    })
}

/// `max_t ||grad f(theta; x_t)||^2` over the dataset at a fixed `theta`.
pub fn max_sample_grad_sq(
    theta: &[f64],
    data: &LabeledDataset,
    lambda: f64,
    map: &FeatureMap,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in data.iter() {
        let g = crate::linear_model::sample_gradient(theta, x, y, lambda, map)?;
        worst = worst.max(math::dot(&g, &g));
    }
    Ok(worst)
}

/// Runs full-batch bound steps (`eta = 1`) until `||grad L|| <= grad_tol`
/// or `max_iters` is reached. Returns `(theta, L(theta), ||grad L||, iterations)`.
pub fn minimize_batch(
    data: &LabeledDataset,
    lambda: f64,
    map: &FeatureMap,
    grad_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    let mut theta = alloc::vec![0.0; map.dim()];
    let mut gnorm = f64::INFINITY;
    let mut iters = 0;
    while iters < max_iters {
        let g = crate::linear_model::loss_gradient(&theta, data, lambda, map)?;
        gnorm = math::norm(&g);
        if gnorm <= grad_tol {
            break;
        }
        theta = pfb_batch_step(&theta, data, 1.0, lambda, map)?;
        iters += 1;
    }
    if iters == max_iters {
        let g = crate::linear_model::loss_gradient(&theta, data, lambda, map)?;
        gnorm = math::norm(&g);
    }
    let loss = crate::linear_model::regularized_loss(&theta, data, lambda, map)?;
    Ok((theta, loss, gnorm, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schedules() {
        assert_eq!(lr_at(2.0, Schedule::InvT, 4).unwrap(), 0.5);
        assert_eq!(lr_at(2.0, Schedule::InvT, 1).unwrap(), 2.0);
        assert_eq!(lr_at(2.0, Schedule::Constant, 17).unwrap(), 2.0);
        assert!(lr_at(2.0, Schedule::InvT, 0).is_err());
    }

    #[test]
    fn spfb_zero_direction_keeps_theta() {
        let b = BoundParams {
            log_z: 0.0,
            mu: vec![0.5, -1.0],
            sigma: SymMat::identity(2),
        };
        let t = spfb_step(&[0.3, 0.4], &b, &[0.5, -1.0], 1.0, 0.0).unwrap();
        assert_eq!(t, vec![0.3, 0.4]);
    }

    #[test]
    fn spfb_scalar_arithmetic() {
        let b = BoundParams {
            log_z: 0.0,
            mu: vec![0.5],
            sigma: SymMat::zeros(1),
        };
        assert_eq!(spfb_step(&[0.0], &b, &[1.0], 1.0, 1.0).unwrap(), vec![0.5]);
    }

    #[test]
    fn spfb_singular_system_is_reported() {
        let b = BoundParams {
            log_z: 0.0,
            mu: vec![0.5],
            sigma: SymMat::zeros(1),
        };
        assert_eq!(
            spfb_step(&[0.0], &b, &[1.0], 1.0, 0.0).unwrap_err(),
            Error::NotPositiveDefinite
        );
    }

    #[test]
    fn sgd_arithmetic() {
        assert_eq!(sgd_step(&[1.0], &[2.0], 0.25).unwrap(), vec![0.5]);
        assert_eq!(sgd_step(&[1.0], &[0.0], 0.25).unwrap(), vec![1.0]);
        assert_eq!(sgd_step(&[1.0], &[2.0], 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn mu1_for_unit_norm_binary() {
        let data = LabeledDataset::new(vec![1.0, 0.0], vec![0], 2, 2).unwrap();
        let c =
            theory_constants(&data, &FeatureMap::block_one_hot(2, 2), 1.0, 1.0, 10.0, 0.0).unwrap();
        assert!((c.mu1 - 0.5).abs() < 1e-15);
        assert!(c.mu1 < c.mu2);
        assert!((c.eta0_min - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_need_two_classes_and_positive_lambda() {
        let data = LabeledDataset::new(vec![1.0], vec![0], 1, 1).unwrap();
        assert!(
            theory_constants(&data, &FeatureMap::block_one_hot(1, 1), 1.0, 1.0, 1.0, 0.0).is_err()
        );
        let data = LabeledDataset::new(vec![1.0], vec![0], 2, 1).unwrap();
        assert!(
            theory_constants(&data, &FeatureMap::block_one_hot(2, 1), 0.0, 1.0, 1.0, 0.0).is_err()
        );
    }

    #[test]
    fn large_lambda_shrinks_bracket() {
        let data = LabeledDataset::new(vec![1.0, 0.5], vec![0], 3, 2).unwrap();
        let map = FeatureMap::block_one_hot(3, 2);
        let c = theory_constants(&data, &map, 1e9, 1.0, 1.0, 0.0).unwrap();
        assert!(c.mu1 < 1e-8 && c.mu2 < 1e-8);
        assert!((c.mu1 / c.mu2 - 1.0).abs() < 1e-8);
    }
}
