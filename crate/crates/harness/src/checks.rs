//! Randomized property suites shared by `pfb check` and the acceptance tests.
//!
//! Each suite draws its instances from `ChaCha8Rng::seed_from_u64(seed)`,
//! compares the library against the brute-force references in
//! [`crate::oracles`], and returns a [`SuiteOutcome`]. A failing suite
//! carries the first counterexample as JSON.

use pfbound::bound_full::{bound_value, build_bound_traced, softmax_mean_check, BuildOptions};
use pfbound::bound_lowrank::{
    build_lowrank_bound, cross_term_eigencheck, jensen_compensation, lowrank_init, woodbury_solve,
    Eviction, NormalizerMode,
};
use pfbound::linalg::SymMat;
use pfbound::optimizers::theory_constants;
use pfbound::train::{train_observed, Method, NoClock, TrainConfig};
use pfbound::{FeatureList, FeatureMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data_io::{split_and_scale, synth_logreg, Scale, SynthSpec};
use crate::oracles::{
    dense_quad_form, dense_spd_solve, dense_symmetric_eig, exact_log_partition, fd_gradient,
};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed value of the suite's margin statistic.
    pub worst: f64,
    pub detail: String,
    pub counterexample: Option<Value>,
}

impl SuiteOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:<25} cases={:<7} worst={:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.detail
        )
    }
}

/// Running extrema of every curvature weight seen by the builders.
#[derive(Debug, Clone, Copy)]
pub struct BetaStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for BetaStats {
    fn default() -> Self {
        Self {
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl BetaStats {
    pub fn record(&mut self, betas: &[f64]) {
        for &b in betas {
            self.count += 1;
            self.min = self.min.min(b);
            self.max = self.max.max(b);
        }
    }

    pub fn outcome(&self) -> SuiteOutcome {
        let passed = self.count == 0 || (self.min > 0.0 && self.max <= 0.25);
        SuiteOutcome {
            name: "beta_range",
            passed,
            cases: self.count,
            worst: self.min,
            detail: format!(
                "beta in [{:.3e}, {:.6}] (need (0, 0.25])",
                self.min, self.max
            ),
            counterexample: None,
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureList {
    FeatureList::new(n, d, normal_vec(rng, n * d)).unwrap()
}

fn rows_json(f: &FeatureList) -> Vec<Vec<f64>> {
    f.rows().map(<[f64]>::to_vec).collect()
}

/// Upper-bound property: `bound_value(theta) >= log Z(theta)` for random
/// instances (`d <= 20`, `n <= 10`, standard normal entries).
pub fn bound_validity(
    instances: usize,
    thetas_per: usize,
    seed: u64,
    opts: BuildOptions,
    betas: &mut BetaStats,
) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut counterexample = None;
    for _ in 0..instances {
        let d = rng.gen_range(1..=20);
        let n = rng.gen_range(1..=10);
        let tt = normal_vec(&mut rng, d);
        let f = random_features(&mut rng, n, d);
        let traced = build_bound_traced(&tt, &f, opts).unwrap();
        betas.record(&traced.betas);
        for _ in 0..thetas_per {
            let theta = normal_vec(&mut rng, d);
            let exact = exact_log_partition(&theta, &f);
            let bound = bound_value(&traced.bound, &theta, &tt).unwrap();
            let slack = (bound - exact) / exact.abs().max(1.0);
            if slack < worst {
                worst = slack;
            }
            if slack < -1e-10 && counterexample.is_none() {
                counterexample = Some(json!({
                    "suite": "bound_validity",
                    "theta_tilde": tt,
                    "features": rows_json(&f),
                    "theta": theta,
                    "bound": bound,
                    "exact_log_partition": exact,
                }));
            }
        }
    }
    SuiteOutcome {
        name: "bound_validity",
        passed: counterexample.is_none(),
        cases: instances * thetas_per,
        worst,
        detail: "relative slack >= -1e-10".into(),
        counterexample,
    }
}

/// Value and gradient tangency at the expansion point.
pub fn tangency(instances: usize, seed: u64, betas: &mut BetaStats) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_val, mut worst_mean, mut worst_fd) = (0.0f64, 0.0f64, 0.0f64);
    let mut counterexample = None;
    for _ in 0..instances {
        let d = rng.gen_range(1..=20);
        let n = rng.gen_range(1..=10);
        let tt = normal_vec(&mut rng, d);
        let f = random_features(&mut rng, n, d);
        let traced = build_bound_traced(&tt, &f, BuildOptions::default()).unwrap();
        betas.record(&traced.betas);
        let b = &traced.bound;
        let exact = exact_log_partition(&tt, &f);
        let val = (bound_value(b, &tt, &tt).unwrap() - exact).abs() / exact.abs().max(1.0);
        let mean = softmax_mean_check(b, &tt, &f).unwrap();
        let fd = fd_gradient(|t| exact_log_partition(t, &f), &tt, 1e-5);
        let fd_err =
            b.mu.iter()
                .zip(&fd)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
        worst_val = worst_val.max(val);
        worst_mean = worst_mean.max(mean);
        worst_fd = worst_fd.max(fd_err);
        if (val > 1e-10 || mean > 1e-10 || fd_err > 1e-5) && counterexample.is_none() {
            counterexample = Some(json!({
                "suite": "tangency",
                "theta_tilde": tt,
                "features": rows_json(&f),
                "value_error": val,
                "mean_error": mean,
                "fd_error": fd_err,
            }));
        }
    }
    SuiteOutcome {
        name: "tangency",
        passed: counterexample.is_none(),
        cases: instances,
        worst: worst_val.max(worst_mean),
        detail: format!(
            "value rel {worst_val:.2e} (<=1e-10), softmax mean {worst_mean:.2e} (<=1e-10), fd {worst_fd:.2e} (<=1e-5)"
        ),
        counterexample,
    }
}

/// Low-rank majorizer against the dense curvature and the exact partition
/// functions. Batches hold one to three samples.
pub fn lowrank_domination(
    instances: usize,
    probes: usize,
    seed: u64,
    mode: NormalizerMode,
    betas: &mut BetaStats,
) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_quad = f64::INFINITY;
    let mut worst_val = f64::INFINITY;
    let mut worst_orth = 0.0f64;
    let mut worst_tangent = 0.0f64;
    let mut counterexample = None;
    for _ in 0..instances {
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let d = rng.gen_range(k..=15);
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=3);
        let tt = normal_vec(&mut rng, d);
        let batch: Vec<FeatureList> = (0..m).map(|_| random_features(&mut rng, n, d)).collect();
        let state = build_lowrank_bound(&tt, &batch, k, mode).unwrap();
        let mut dense = SymMat::zeros(d);
        let mut mu = vec![0.0; d];
        let mut log_z = 0.0;
        for f in &batch {
            let traced = build_bound_traced(&tt, f, BuildOptions::default()).unwrap();
            betas.record(&traced.betas);
            dense.add_assign(&traced.bound.sigma).unwrap();
            mu.iter_mut()
                .zip(&traced.bound.mu)
                .for_each(|(a, b)| *a += b);
            log_z += traced.bound.log_z;
        }
        worst_orth = worst_orth.max(state.orthonormality_error());
        let tangent_err = state
            .mu
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold((state.log_z - log_z).abs(), f64::max);
        worst_tangent = worst_tangent.max(tangent_err);
        let mut failed = state.orthonormality_error() > 1e-8 || tangent_err > 1e-10;
        let mut bad_probe = None;
        for _ in 0..probes {
            let x = normal_vec(&mut rng, d);
            let gap = state.quadform(&x).unwrap() - dense_quad_form(dense.as_slice(), &x);
            worst_quad = worst_quad.min(gap);
            let theta: Vec<f64> = tt.iter().zip(&x).map(|(a, b)| a + b).collect();
            let exact: f64 = batch.iter().map(|f| exact_log_partition(&theta, f)).sum();
            let vgap = (state.bound_value(&theta, &tt).unwrap() - exact) / exact.abs().max(1.0);
            worst_val = worst_val.min(vgap);
            if (gap < -1e-8 || vgap < -1e-10) && bad_probe.is_none() {
                bad_probe = Some((x, gap, vgap));
                failed = true;
            }
        }
        if failed && counterexample.is_none() {
            counterexample = Some(json!({
                "suite": "lowrank_domination",
                "rank": k,
                "theta_tilde": tt,
                "batch": batch.iter().map(rows_json).collect::<Vec<_>>(),
                "probe": bad_probe.as_ref().map(|p| &p.0),
                "quadform_gap": bad_probe.as_ref().map(|p| p.1),
                "value_gap": bad_probe.as_ref().map(|p| p.2),
                "orthonormality_error": state.orthonormality_error(),
                "tangent_error": tangent_err,
            }));
        }
    }
    SuiteOutcome {
        name: "lowrank_domination",
        passed: counterexample.is_none(),
        cases: instances * probes,
        worst: worst_quad,
        detail: format!(
            "quadform gap >= -1e-8 (worst {worst_quad:.2e}); value slack {worst_val:.2e}; ||VV^T-I|| {worst_orth:.1e}; mu/log z {worst_tangent:.1e}"
        ),
        counterexample,
    }
}

/// Every eviction's diagonal compensation dominates the evicted rank-one term.
pub fn jensen_compensation_suite(instances: usize, probes: usize, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    let mut counterexample = None;
    for _ in 0..instances {
        let d = rng.gen_range(2..=15);
        let k = rng.gen_range(1..=d.min(5));
        let mut state = lowrank_init(k, d).unwrap();
        for _ in 0..rng.gen_range(1..=12) {
            let r = normal_vec(&mut rng, d);
            let (c, v) = match state.absorb(&r).unwrap() {
                Eviction::None => continue,
                Eviction::Row {
                    weight, direction, ..
                } => (weight, direction),
                Eviction::Residual { weight, direction } => (weight, direction),
            };
            let f = jensen_compensation(c, &v);
            for _ in 0..probes {
                let x = normal_vec(&mut rng, d);
                let lhs: f64 = x.iter().zip(&f).map(|(xi, fi)| xi * xi * fi).sum();
                let dotv: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
                let rhs = c * dotv * dotv;
                let slack = lhs - rhs;
                cases += 1;
                worst = worst.min(slack);
                if slack < -1e-10 * rhs.abs().max(1.0) && counterexample.is_none() {
                    counterexample = Some(json!({
                        "suite": "jensen_compensation", "c": c, "v": v, "x": x, "slack": slack
                    }));
                }
            }
        }
    }
    SuiteOutcome {
        name: "jensen_compensation",
        passed: counterexample.is_none(),
        cases,
        worst,
        detail: "x^T F x - c (x^T v)^2 >= -1e-10".into(),
        counterexample,
    }
}

fn random_orthonormal_rows(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v = normal_vec(rng, d);
        for _ in 0..2 {
            for r in &rows {
                let c: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rows.concat()
}

/// Woodbury solve against a dense Cholesky solve of `V^T S V + D`.
pub fn woodbury_equivalence(instances: usize, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut counterexample = None;
    for _ in 0..instances {
        let d = rng.gen_range(1..=30);
        let k = rng.gen_range(1..=d.min(5));
        let v = random_orthonormal_rows(&mut rng, k, d);
        // S log-uniform in [1e-8, 1e2], D in [0.1, 10]
        let s: Vec<f64> = (0..k)
            .map(|_| 10f64.powf(rng.gen_range(-8.0..2.0)))
            .collect();
        let diag: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..10.0)).collect();
        let rhs = normal_vec(&mut rng, d);
        let mut dense = vec![0.0; d * d];
        for (i, si) in s.iter().enumerate() {
            let row = &v[i * d..(i + 1) * d];
            for a in 0..d {
                for b in 0..d {
                    dense[a * d + b] += si * row[a] * row[b];
                }
            }
        }
        for (i, di) in diag.iter().enumerate() {
            dense[i * d + i] += di;
        }
        let reference = dense_spd_solve(&dense, &rhs).unwrap();
        let got = woodbury_solve(&v, &s, &diag, &rhs).unwrap();
        let num = got
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = reference
            .iter()
            .map(|b| b * b)
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let rel = num / den;
        worst = worst.max(rel);
        if rel > 1e-8 && counterexample.is_none() {
            counterexample = Some(json!({
                "suite": "woodbury", "v": v, "s": s, "d": diag, "rhs": rhs, "relative_error": rel
            }));
        }
    }
    SuiteOutcome {
        name: "woodbury",
        passed: counterexample.is_none(),
        cases: instances,
        worst,
        detail: "relative error <= 1e-8".into(),
        counterexample,
    }
}

/// Extreme eigenvalues of `a g^T + g a^T` for orthogonal pairs are
/// `+-||a|| ||g||`; cross-checked against the dense reference eigensolver.
pub fn cross_term_eigenstructure(instances: usize, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut counterexample = None;
    for _ in 0..instances {
        let d = rng.gen_range(2..=20);
        let a = normal_vec(&mut rng, d);
        let mut g = normal_vec(&mut rng, d);
        let aa: f64 = a.iter().map(|x| x * x).sum();
        for _ in 0..2 {
            let c: f64 = a.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() / aa;
            g.iter_mut().zip(&a).for_each(|(gi, ai)| *gi -= c * ai);
        }
        let expected = aa.sqrt() * g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (hi, lo) = cross_term_eigencheck(&a, &g).unwrap();
        let mut dense = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                dense[i * d + j] = a[i] * g[j] + g[i] * a[j];
            }
        }
        let (vals, _) = dense_symmetric_eig(&dense, d).unwrap();
        let err = [
            (hi - expected).abs(),
            (lo + expected).abs(),
            (vals[d - 1] - expected).abs(),
            (vals[0] + expected).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst = worst.max(err);
        if err > 1e-8 && counterexample.is_none() {
            counterexample =
                Some(json!({"suite": "cross_term_eigenstructure", "a": a, "g": g, "error": err}));
        }
    }
    SuiteOutcome {
        name: "cross_term_eigenstructure",
        passed: counterexample.is_none(),
        cases: instances,
        worst,
        detail: "|lambda_ext -+ ||a|| ||g||| <= 1e-8".into(),
        counterexample,
    }
}

/// Which statement the preconditioner spectrum suite checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpectrumForm {
    /// Every eigenvalue of `(Sigma_t + lambda I)^{-1}` in `[mu1, mu2]`.
    Full,
    /// Only `1 / ||Sigma_t + lambda I||` (the smallest eigenvalue of the
    /// inverse) in `[mu1, mu2]`.
    Norm,
}

/// Preconditioner spectrum of `Sigma_t` sampled from an SPFB run (`m = 1`)
/// on unit-norm synthetic data (`p = 10`, `n = 3`, `T = 5000`, `lambda = 0.1`).
pub fn preconditioner_spectrum(samples: usize, seed: u64, form: SpectrumForm) -> SuiteOutcome {
    let lambda = 0.1;
    let spec = SynthSpec {
        d: 10,
        n: 3,
        t: 5000,
        separation: 3.0,
        noise: 0.0,
        seed,
    };
    let (data, _) = synth_logreg(&spec).unwrap();
    let (train, test, _) = split_and_scale(&data, 0.2, seed, Scale::UnitNorm).unwrap();
    let map = FeatureMap::block_one_hot(3, 10);
    let c = theory_constants(&train, &map, lambda, 0.0, 1.0, 0.0).unwrap();

    let mut cfg = TrainConfig::new(Method::Spfb, 2.0 * c.eta0_min, lambda, 1, 1, seed);
    cfg.eval_steps = Some(vec![]);
    let stride = (train.len() / samples.max(1)).max(1);
    let mut sampled: Vec<(Vec<f64>, usize)> = Vec::new();
    train_observed(
        &cfg,
        &train,
        &test,
        &map,
        &mut NoClock,
        &mut |step, theta, rows| {
            if step % stride == 1 % stride && sampled.len() < samples {
                sampled.push((theta.to_vec(), rows[0]));
            }
        },
    )
    .unwrap();

    let d = map.dim();
    let (mut lo, mut hi, mut lo_of_min) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    let mut hi_of_min = 0.0f64;
    let mut counterexample = None;
    for (theta, row) in &sampled {
        let traced = build_bound_traced(
            theta,
            &map.feature_list(train.x(*row)),
            BuildOptions::default(),
        )
        .unwrap();
        let mut m = traced.bound.sigma.as_slice().to_vec();
        for i in 0..d {
            m[i * d + i] += lambda;
        }
        let (vals, _) = dense_symmetric_eig(&m, d).unwrap();
        let inv: Vec<f64> = vals.iter().map(|v| 1.0 / v).collect();
        let min_inv = inv.iter().copied().fold(f64::INFINITY, f64::min);
        let max_inv = inv.iter().copied().fold(0.0, f64::max);
        lo = lo.min(min_inv);
        hi = hi.max(max_inv);
        lo_of_min = lo_of_min.min(min_inv);
        hi_of_min = hi_of_min.max(min_inv);
        let (check_lo, check_hi) = match form {
            SpectrumForm::Full => (min_inv, max_inv),
            SpectrumForm::Norm => (min_inv, min_inv),
        };
        let tol = 1e-12;
        if (check_lo < c.mu1 * (1.0 - tol) || check_hi > c.mu2 * (1.0 + tol))
            && counterexample.is_none()
        {
            counterexample = Some(json!({
                "suite": "preconditioner_spectrum",
                "theta": theta,
                "x": train.x(*row),
                "lambda": lambda,
                "mu1": c.mu1,
                "mu2": c.mu2,
                "inverse_eigenvalues": inv,
            }));
        }
    }
    SuiteOutcome {
        name: match form {
            SpectrumForm::Full => "preconditioner_spectrum",
            SpectrumForm::Norm => "preconditioner_norm",
        },
        passed: counterexample.is_none() && !sampled.is_empty(),
        cases: sampled.len(),
        worst: match form {
            SpectrumForm::Full => hi,
            SpectrumForm::Norm => hi_of_min,
        },
        detail: format!(
            "[mu1, mu2] = [{:.4}, {:.4}]; inverse spectrum [{lo:.4}, {hi:.4}]; smallest-eigenvalue range [{lo_of_min:.4}, {hi_of_min:.4}]",
            c.mu1, c.mu2
        ),
        counterexample,
    }
}

/// Instance counts for one run of every suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteSizes {
    pub validity_instances: usize,
    pub validity_thetas: usize,
    pub tangency: usize,
    pub domination_instances: usize,
    pub domination_probes: usize,
    pub woodbury: usize,
    pub cross_term: usize,
    pub spectrum: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            validity_instances: 1000,
            validity_thetas: 50,
            tangency: 100,
            domination_instances: 500,
            domination_probes: 100,
            woodbury: 200,
            cross_term: 200,
            spectrum: 200,
        }
    }
}

impl SuiteSizes {
    /// Every suite runs `trials` instances (probe counts unchanged).
    pub fn uniform(trials: usize) -> Self {
        Self {
            validity_instances: trials,
            tangency: trials,
            domination_instances: trials,
            woodbury: trials,
            cross_term: trials,
            spectrum: trials,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub sizes: SuiteSizes,
    pub seed: u64,
    pub build: BuildOptions,
    pub spectrum_form: SpectrumForm,
}

/// Runs all suites in a fixed order.
pub fn run_all(opts: &CheckOptions) -> Vec<SuiteOutcome> {
    let s = opts.sizes;
    let mut betas = BetaStats::default();
    let mut out = vec![
        bound_validity(
            s.validity_instances,
            s.validity_thetas,
            opts.seed,
            opts.build,
            &mut betas,
        ),
        tangency(s.tangency, opts.seed.wrapping_add(1), &mut betas),
        lowrank_domination(
            s.domination_instances,
            s.domination_probes,
            opts.seed.wrapping_add(2),
            NormalizerMode::PerSample,
            &mut betas,
        ),
        jensen_compensation_suite(s.domination_instances, 10, opts.seed.wrapping_add(3)),
        woodbury_equivalence(s.woodbury, opts.seed.wrapping_add(4)),
        cross_term_eigenstructure(s.cross_term, opts.seed.wrapping_add(5)),
        preconditioner_spectrum(s.spectrum, opts.seed.wrapping_add(6), opts.spectrum_form),
    ];
    out.insert(3, betas.outcome());
    out
}
