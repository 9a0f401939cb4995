//! Seeded mini-batch training loop.
//!
//! Every epoch draws a fresh permutation of the training rows from a
//! ChaCha8 generator seeded with `seed` and walks it in batches of
//! `batch_size` (the last batch may be shorter). Batch statistics are
//! averaged over the batch before the update, so the step solves
//! `(mean Sigma_j + lambda I) v = mean (mu_j - f_j) + lambda theta`.
//! Given the same config and data the trace is bit-for-bit reproducible.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bound_lowrank::{build_lowrank_bound, NormalizerMode};
use crate::error::{Error, Result};
use crate::linear_model::{self, FeatureMap, LabeledDataset};
use crate::math;
use crate::optimizers::{averaged_bound, lr_at, preconditioned_step, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Full-batch bound steps; one step per epoch.
    Pfb,
    Spfb,
    Lspfb {
        rank: usize,
    },
    Sgd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pfb => "pfb",
            Method::Spfb => "spfb",
            Method::Lspfb { .. } => "lspfb",
            Method::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub eta0: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: Schedule,
    /// Evaluate whenever this many more training samples have been consumed.
    pub eval_every: usize,
    /// If set, evaluate exactly after these step numbers instead.
    pub eval_steps: Option<Vec<usize>>,
    pub normalizer: NormalizerMode,
}

impl TrainConfig {
    pub fn new(
        method: Method,
        eta0: f64,
        lambda: f64,
        batch_size: usize,
        epochs: usize,
        seed: u64,
    ) -> Self {
        Self {
            method,
            eta0,
            lambda,
            batch_size,
            epochs,
            seed,
            schedule: Schedule::InvT,
            eval_every: batch_size,
            eval_steps: None,
            normalizer: NormalizerMode::PerSample,
        }
    }

    fn validate(&self, map: &FeatureMap) -> Result<()> {
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(Error::domain("eta0 must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::domain("lambda must be nonnegative"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::domain(
                "batch size and eval interval must be positive",
            ));
        }
        if let Method::Lspfb { rank } = self.method {
            if rank < 1 || rank > map.dim() {
                return Err(Error::domain(alloc::format!(
                    "rank {rank} must lie in 1..={}",
                    map.dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    /// Training samples consumed divided by the training-set size.
    pub epoch: f64,
    /// Regularized objective on the training set.
    pub train_loss: f64,
    /// Mean negative log-likelihood on the test set (no regularizer).
    pub test_loss: f64,
    pub test_acc: f64,
    /// Learning rate of the latest step (0 before the first step).
    pub lr: f64,
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub records: Vec<MetricRecord>,
    pub diverged: Option<Divergence>,
    pub theta: Vec<f64>,
}

/// Source of wall-clock time for `step_ms`.
pub trait Clock {
    fn now_ms(&mut self) -> f64;
}

/// Reports zero elapsed time; keeps traces reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&mut self) -> f64 {
        0.0
    }
}

pub fn train(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    map: &FeatureMap,
    clock: &mut dyn Clock,
) -> Result<MetricsTrace> {
    train_observed(config, train_set, test_set, map, clock, &mut |_, _, _| {})
}

/// Callback receiving `(step, theta, batch rows)`.
pub type Observer<'a> = dyn FnMut(usize, &[f64], &[usize]) + 'a;

/// Like [`train`], calling `observer(step, theta, batch)` before each update
/// with the parameters the update starts from.
pub fn train_observed(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    map: &FeatureMap,
    clock: &mut dyn Clock,
    observer: &mut Observer<'_>,
) -> Result<MetricsTrace> {
    config.validate(map)?;
    if train_set.input_dim() != map.input_dim() || test_set.input_dim() != map.input_dim() {
        return Err(Error::domain(
            "dataset and feature map disagree on input dimension",
        ));
    }
    let d = map.dim();
    let t_len = train_set.len();
    let mut theta = vec![0.0; d];
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..t_len).collect();

    let evaluate = |theta: &[f64], step: usize, seen: usize, lr: f64, step_ms: f64| MetricRecord {
        step,
        epoch: seen as f64 / t_len as f64,
        train_loss: linear_model::mean_nll(theta, train_set, map)
            + 0.5 * config.lambda * math::dot(theta, theta),
        test_loss: linear_model::mean_nll(theta, test_set, map),
        test_acc: linear_model::accuracy(theta, test_set, map),
        lr,
        step_ms,
    };
    records.push(evaluate(&theta, 0, 0, 0.0, 0.0));

    let batch = if config.method == Method::Pfb {
        t_len
    } else {
        config.batch_size.min(t_len)
    };
    let mut step = 0usize;
    let mut seen = 0usize;
    let mut diverged = None;

    'epochs: for _epoch in 0..config.epochs {
        if config.method != Method::Pfb {
            order.shuffle(&mut rng);
        }
        for rows in order.chunks(batch) {
            step += 1;
            let lr = lr_at(config.eta0, config.schedule, step)?;
            observer(step, &theta, rows);
            let start = clock.now_ms();
            let next = take_step(config, train_set, map, &theta, rows, lr);
            let step_ms = clock.now_ms() - start;
            let prev_seen = seen;
            seen += rows.len();
            match next {
                Ok(t) if t.iter().all(|x| x.is_finite()) => theta = t,
                Ok(_) => {
                    diverged = Some(Divergence {
                        step,
                        reason: "non-finite parameters".to_string(),
                    });
                    break 'epochs;
                }
                Err(e) => {
                    diverged = Some(Divergence {
                        step,
                        reason: e.to_string(),
                    });
                    break 'epochs;
                }
            }
            let due = match &config.eval_steps {
                Some(steps) => steps.binary_search(&step).is_ok(),
                None => seen / config.eval_every > prev_seen / config.eval_every,
            };
            if due {
                let rec = evaluate(&theta, step, seen, lr, step_ms);
                let finite = rec.train_loss.is_finite() && rec.test_loss.is_finite();
                records.push(rec);
                if !finite {
                    diverged = Some(Divergence {
                        step,
                        reason: "non-finite loss".to_string(),
                    });
                    break 'epochs;
                }
            }
        }
    }
    Ok(MetricsTrace {
        records,
        diverged,
        theta,
    })
}

fn take_step(
    config: &TrainConfig,
    data: &LabeledDataset,
    map: &FeatureMap,
    theta: &[f64],
    rows: &[usize],
    lr: f64,
) -> Result<Vec<f64>> {
    let lambda = config.lambda;
    match config.method {
        Method::Pfb | Method::Spfb => {
            let (sigma, mut dir) = averaged_bound(theta, data, rows, map)?;
            math::axpy(lambda, theta, &mut dir);
            preconditioned_step(theta, &sigma, &dir, lr, lambda)
        }
        Method::Lspfb { rank } => {
            let feats: Vec<_> = rows.iter().map(|&i| map.feature_list(data.x(i))).collect();
            let mut state = build_lowrank_bound(theta, &feats, rank, config.normalizer)?;
            state.scale(1.0 / rows.len() as f64);
            let mut f_mean = vec![0.0; map.dim()];
            let w = 1.0 / rows.len() as f64;
            for &i in rows {
                map.add_feature(w, data.x(i), data.label(i), &mut f_mean);
            }
            crate::optimizers::lspfb_step(theta, &state, &f_mean, lr, lambda)
        }
        Method::Sgd => {
            let w = 1.0 / rows.len() as f64;
            let mut grad: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
            for &i in rows {
                linear_model::add_nll_gradient(theta, data.x(i), data.label(i), w, map, &mut grad);
            }
            crate::optimizers::sgd_step(theta, &grad, lr)
        }
    }
}
