//! Rank-k plus diagonal majorizer `V^T S V + D` of the bound curvature.
//!
//! Each label's rank-one term `r r^T` (with `r = sqrt(beta) l`) is split into
//! its component `a` inside the row space of `V` and the orthogonal residual
//! `g`. The in-span part is folded into `S` and re-diagonalized; the cross
//! term `a g^T + g a^T` has eigenvalues `+-||a|| ||g||` and is covered by
//! `||a|| ||g|| I` on the diagonal. That leaves `k + 1` directions, so the
//! weakest one (by eigenvalue) is evicted and replaced by the diagonal
//! `F_i = c |v_i| sum_j |v_j|`, which dominates `c (x^T v)^2` for every `x`.
//! The quadratic form therefore never drops below the dense one.

use alloc::vec;
use alloc::vec::Vec;

use crate::bound_full::curvature_weight;
use crate::error::{check_len, Error, Result};
use crate::linalg::{symmetric_eigen, Cholesky, SymMat};
use crate::linear_model::FeatureList;
use crate::math::{self, abs, dot, log_add_exp, norm, sigmoid, sqrt};

/// Residuals shorter than this are treated as lying in the row space of `V`.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Floor applied to `S` before it is inverted in [`woodbury_solve`].
pub const S_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankBound {
    rank: usize,
    dim: usize,
    /// `k x d`, orthonormal rows.
    pub v: Vec<f64>,
    /// Diagonal of `S`.
    pub s: Vec<f64>,
    /// Diagonal of `D`.
    pub diag: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_z: f64,
}

/// What happened to the `k + 1`-th direction during an absorb.
#[derive(Debug, Clone, PartialEq)]
pub enum Eviction {
    /// The residual was negligible; nothing was evicted.
    None,
    /// Row `index` of `V` (eigenvalue `weight`, direction `direction`) was
    /// replaced by the normalized residual.
    Row {
        index: usize,
        weight: f64,
        direction: Vec<f64>,
    },
    /// The residual itself was the weakest direction and went to the diagonal.
    Residual { weight: f64, direction: Vec<f64> },
}

/// Which running normalizer feeds the curvature weight inside a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NormalizerMode {
    /// Each sample restarts its own `z_j`, as in the single-observation builder.
    #[default]
    PerSample,
    /// Use the normalizer accumulated over the samples already processed.
    /// Kept only for comparison: the first sample then gets zero curvature
    /// and the result is not an upper bound.
    Global,
}

pub fn lowrank_init(rank: usize, dim: usize) -> Result<LowRankBound> {
    if rank < 1 || rank > dim {
        return Err(Error::domain(alloc::format!(
            "rank {rank} must lie in 1..={dim}"
        )));
    }
    let mut v = vec![0.0; rank * dim];
    for i in 0..rank {
        v[i * dim + i] = 1.0;
    }
    Ok(LowRankBound {
        rank,
        dim,
        v,
        s: vec![0.0; rank],
        diag: vec![0.0; dim],
        mu: vec![0.0; dim],
        log_z: f64::NEG_INFINITY,
    })
}

/// Jensen-style diagonal `F_i = c |v_i| sum_j |v_j|` with `x^T F x >= c (x^T v)^2`.
pub fn jensen_compensation(c: f64, v: &[f64]) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| abs(*x)).sum();
    v.iter().map(|x| c * abs(*x) * l1).collect()
}

impl LowRankBound {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.v
            .chunks_exact(self.dim)
            .map(|row| dot(row, x))
            .collect()
    }

    fn lift(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, row) in coeffs.iter().zip(self.v.chunks_exact(self.dim)) {
            math::axpy(*c, row, &mut out);
        }
        out
    }

    /// Absorbs `r r^T` into the majorizer.
    pub fn absorb(&mut self, r: &[f64]) -> Result<Eviction> {
        check_len(self.dim, r.len())?;
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite rank-one update"));
        }
        let k = self.rank;
        let d = self.dim;

        let p = self.project(r);
        let mut g: Vec<f64> = {
            let a = self.lift(&p);
            r.iter().zip(&a).map(|(ri, ai)| ri - ai).collect()
        };
        // second Gram-Schmidt pass keeps g orthogonal to V under roundoff
        let p2 = self.project(&g);
        let corr = self.lift(&p2);
        math::axpy(-1.0, &corr, &mut g);
        let a: Vec<f64> = r.iter().zip(&g).map(|(ri, gi)| ri - gi).collect();
        let p: Vec<f64> = p.iter().zip(&p2).map(|(x, y)| x + y).collect();

        // S + p p^T, re-diagonalized; V <- Q V
        let mut dense = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                dense[i * k + j] = p[i] * p[j];
            }
            dense[i * k + i] += self.s[i];
        }
        let eig = symmetric_eigen(k, &dense)?;
        let mut v_new = vec![0.0; k * d];
        for i in 0..k {
            let out = &mut v_new[i * d..(i + 1) * d];
            for j in 0..k {
                let q = eig.vectors[i * k + j];
                if q != 0.0 {
                    math::axpy(q, &self.v[j * d..(j + 1) * d], out);
                }
            }
        }
        self.v = v_new;
        self.s = eig.values.iter().map(|&x| x.max(0.0)).collect();

        let g_norm = norm(&g);
        if g_norm < RESIDUAL_TOL {
            return Ok(Eviction::None);
        }

        let cross = g_norm * norm(&a);
        for di in &mut self.diag {
            *di += cross;
        }

        let g_weight = g_norm * g_norm;
        let (min_idx, min_s) =
            self.s
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc },
                );

        if g_weight <= min_s {
            let comp = jensen_compensation(1.0, &g);
            math::axpy(1.0, &comp, &mut self.diag);
            Ok(Eviction::Residual {
                weight: g_weight,
                direction: g.iter().map(|x| x / g_norm).collect(),
            })
        } else {
            let old: Vec<f64> = self.row(min_idx).to_vec();
            let comp = jensen_compensation(min_s, &old);
            math::axpy(1.0, &comp, &mut self.diag);
            self.s[min_idx] = g_weight;
            for (dst, gi) in self.v[min_idx * d..(min_idx + 1) * d].iter_mut().zip(&g) {
                *dst = gi / g_norm;
            }
            Ok(Eviction::Row {
                index: min_idx,
                weight: min_s,
                direction: old,
            })
        }
    }

    /// `x^T (V^T S V + D) x` in `O(kd)`.
    pub fn quadform(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim, x.len())?;
        let proj = self.project(x);
        let low: f64 = proj.iter().zip(&self.s).map(|(p, s)| s * p * p).sum();
        let diag: f64 = x.iter().zip(&self.diag).map(|(xi, di)| di * xi * xi).sum();
        Ok(low + diag)
    }

    /// `V^T S V + D` as a dense matrix.
    pub fn densify(&self) -> SymMat {
        let mut m = SymMat::zeros(self.dim);
        for (i, s) in self.s.iter().enumerate() {
            m.rank_one_upper(*s, self.row(i));
        }
        m.mirror_upper();
        for (i, di) in self.diag.iter().enumerate() {
            let cur = m.get(i, i);
            m.set(i, i, cur + di);
        }
        m
    }

    /// `max |V V^T - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rank {
            for j in 0..self.rank {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(abs(dot(self.row(i), self.row(j)) - target));
            }
        }
        worst
    }

    /// Bound on the summed log-partition functions at `theta`.
    pub fn bound_value(&self, theta: &[f64], theta_tilde: &[f64]) -> Result<f64> {
        check_len(self.dim, theta.len())?;
        check_len(self.dim, theta_tilde.len())?;
        let delta: Vec<f64> = theta.iter().zip(theta_tilde).map(|(a, b)| a - b).collect();
        Ok(self.log_z + dot(&delta, &self.mu) + 0.5 * self.quadform(&delta)?)
    }

    /// Multiplies `S`, `D` and `mu` by `factor` (turns batch sums into means).
    pub fn scale(&mut self, factor: f64) {
        for x in self.s.iter_mut().chain(&mut self.diag).chain(&mut self.mu) {
            *x *= factor;
        }
    }
}

/// Runs the label recursion for every sample in `batch`, feeding each
/// rank-one term into a shared low-rank majorizer.
///
/// `mu` is the sum of the per-sample means and, in [`NormalizerMode::PerSample`],
/// `log_z` is `sum_j log z_j`, so the result bounds `sum_j log Z_{x_j}(theta)`.
pub fn build_lowrank_bound(
    theta_tilde: &[f64],
    batch: &[FeatureList],
    rank: usize,
    mode: NormalizerMode,
) -> Result<LowRankBound> {
    let first = batch
        .first()
        .ok_or_else(|| Error::domain("low-rank bound needs a nonempty batch"))?;
    let d = first.dim();
    check_len(d, theta_tilde.len())?;
    let mut state = lowrank_init(rank, d)?;
    let mut global_log_z = f64::NEG_INFINITY;
    let mut sum_log_z = 0.0;
    let mut upsilon = vec![0.0; d];
    let mut r = vec![0.0; d];

    for features in batch {
        check_len(d, features.dim())?;
        let mut rows = features.rows();
        let f0 = rows.next().expect("feature lists are nonempty");
        let mut log_zj = dot(theta_tilde, f0);
        upsilon.copy_from_slice(f0);

        for f in rows {
            let score = dot(theta_tilde, f);
            let u_local = score - log_zj;
            let u = match mode {
                NormalizerMode::PerSample => u_local,
                NormalizerMode::Global => score - global_log_z,
            };
            let beta = if u == f64::INFINITY {
                0.0
            } else {
                curvature_weight(u)
            };
            let sb = sqrt(beta);
            for ((ri, fi), ui) in r.iter_mut().zip(f).zip(&upsilon) {
                *ri = sb * (fi - ui);
            }
            if beta > 0.0 {
                state.absorb(&r)?;
            }
            let kappa = sigmoid(u_local);
            for (ui, fi) in upsilon.iter_mut().zip(f) {
                *ui += kappa * (fi - *ui);
            }
            log_zj = log_add_exp(log_zj, score);
        }
        math::axpy(1.0, &upsilon, &mut state.mu);
        sum_log_z += log_zj;
        global_log_z = log_add_exp(global_log_z, log_zj);
    }
    state.log_z = match mode {
        NormalizerMode::PerSample => sum_log_z,
        NormalizerMode::Global => global_log_z,
    };
    Ok(state)
}

/// `(V^T S V + D)^{-1} rhs` through the Woodbury identity
/// `D^{-1} - D^{-1} V^T (S^{-1} + V D^{-1} V^T)^{-1} V D^{-1}`.
///
/// `S` entries are floored at [`S_FLOOR`]. Costs `O(k^3 + kd)`.
pub fn woodbury_solve(v: &[f64], s: &[f64], diag: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let k = s.len();
    let d = diag.len();
    check_len(k * d, v.len())?;
    check_len(d, rhs.len())?;
    if let Some(bad) = diag.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::domain(alloc::format!(
            "diagonal entry {bad} is not positive"
        )));
    }
    let dinv_rhs: Vec<f64> = rhs.iter().zip(diag).map(|(b, di)| b / di).collect();
    if k == 0 {
        return Ok(dinv_rhs);
    }
    let rows: Vec<&[f64]> = v.chunks_exact(d).collect();
    // inner = S^{-1} + V D^{-1} V^T
    let mut inner = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let val: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .zip(diag)
                .map(|((a, b), di)| a * b / di)
                .sum();
            inner[i * k + j] = val;
            inner[j * k + i] = val;
        }
        inner[i * k + i] += 1.0 / s[i].max(S_FLOOR);
    }
    let proj: Vec<f64> = rows.iter().map(|row| dot(row, &dinv_rhs)).collect();
    let coeffs = Cholesky::factor_slice(k, &inner)?.solve(&proj)?;
    let mut out = dinv_rhs;
    for (c, row) in coeffs.iter().zip(&rows) {
        for ((o, vi), di) in out.iter_mut().zip(row.iter()).zip(diag) {
            *o -= c * vi / di;
        }
    }
    Ok(out)
}

/// Extreme eigenvalues of `a g^T + g a^T` for orthogonal nonzero `a`, `g`.
/// They come out as `+-||a|| ||g||`.
pub fn cross_term_eigencheck(a: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    check_len(a.len(), g.len())?;
    let na = norm(a);
    let ng = norm(g);
    if na == 0.0 || ng == 0.0 {
        return Err(Error::domain("cross term needs nonzero vectors"));
    }
    if abs(dot(a, g)) > 1e-10 * (na * ng).max(1.0) {
        return Err(Error::domain("cross term vectors are not orthogonal"));
    }
    let n = a.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = a[i] * g[j] + g[i] * a[j];
        }
    }
    let eig = symmetric_eigen(n, &m)?;
    let max = eig.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max, min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn init_is_canonical() {
        let s = lowrank_init(2, 3).unwrap();
        assert_eq!(s.v, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.s, vec![0.0, 0.0]);
        assert_eq!(s.diag, vec![0.0; 3]);
        assert_eq!(s.orthonormality_error(), 0.0);
        assert_eq!(s.log_z, f64::NEG_INFINITY);
        let full = lowrank_init(3, 3).unwrap();
        assert_eq!(full.v, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(lowrank_init(4, 3).is_err());
        assert!(lowrank_init(0, 3).is_err());
    }

    #[test]
    fn zero_update_is_noop() {
        let mut s = lowrank_init(2, 3).unwrap();
        s.s = vec![0.5, 2.0];
        let before = s.clone();
        assert_eq!(s.absorb(&[0.0; 3]).unwrap(), Eviction::None);
        assert_eq!(s, before);
    }

    #[test]
    fn in_span_update_skips_eviction() {
        let mut s = lowrank_init(1, 2).unwrap();
        let ev = s.absorb(&[2.0, 0.0]).unwrap();
        assert_eq!(ev, Eviction::None);
        assert_eq!(s.diag, vec![0.0, 0.0]);
        assert_eq!(s.s, vec![4.0]);
    }

    #[test]
    fn orthogonal_update_replaces_empty_row() {
        // k=1, d=2, V=[1,0], S=0: r=(0,1) has p=0, g=r; the zero eigenvalue
        // is evicted at no cost and the quadform equals r r^T exactly
        let mut s = lowrank_init(1, 2).unwrap();
        let ev = s.absorb(&[0.0, 1.0]).unwrap();
        assert_eq!(
            ev,
            Eviction::Row {
                index: 0,
                weight: 0.0,
                direction: vec![1.0, 0.0]
            }
        );
        assert_eq!(s.diag, vec![0.0, 0.0]);
        assert_eq!(s.v, vec![0.0, 1.0]);
        assert_eq!(s.s, vec![1.0]);
        for x in [[1.0, 0.0], [0.0, 1.0], [0.3, -2.0]] {
            assert!((s.quadform(&x).unwrap() - x[1] * x[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_tie_evicts_residual() {
        let mut s = lowrank_init(1, 2).unwrap();
        s.s = vec![1.0];
        let ev = s.absorb(&[0.0, 1.0]).unwrap();
        assert!(matches!(ev, Eviction::Residual { .. }));
        assert_eq!(s.v, vec![1.0, 0.0]);
        assert_eq!(s.diag, vec![0.0, 1.0]);
    }

    #[test]
    fn nonfinite_update_is_rejected() {
        let mut s = lowrank_init(1, 2).unwrap();
        assert!(s.absorb(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn woodbury_two_by_two() {
        // Sigma = diag(4, 2)
        let x = woodbury_solve(&[1.0, 0.0], &[2.0], &[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn woodbury_with_vanishing_low_rank_part() {
        let x = woodbury_solve(&[0.6, 0.8], &[0.0], &[2.0, 4.0], &[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6 && (x[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn woodbury_rejects_nonpositive_diagonal() {
        assert!(woodbury_solve(&[1.0, 0.0], &[1.0], &[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cross_term_examples() {
        let (hi, lo) = cross_term_eigencheck(&[1.0, 0.0], &[0.0, 2.0]).unwrap();
        assert!((hi - 2.0).abs() < 1e-12 && (lo + 2.0).abs() < 1e-12);
        let (hi, lo) = cross_term_eigencheck(&[0.0, 0.0, 0.0, 3.0], &[4.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((hi - 12.0).abs() < 1e-12 && (lo + 12.0).abs() < 1e-12);
        assert!(cross_term_eigencheck(&[1.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn single_label_sample_has_zero_curvature() {
        let f = FeatureList::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let b = build_lowrank_bound(&[0.1, 0.2, 0.3], &[f], 2, NormalizerMode::PerSample).unwrap();
        assert_eq!(b.mu, vec![1.0, -2.0, 0.5]);
        assert_eq!(b.quadform(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
    }
}
