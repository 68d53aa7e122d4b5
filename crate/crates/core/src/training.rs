//! Joint multi-rate training.
//!
//! The criterion sums, over a batch and over all rates, `W_s` times the
//! squared Frobenius reconstruction error of rate `s`, averaged over the batch.
//! Every rate's error flows back into the shared FCDS block simultaneously.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::eval::{self, to_db};
use crate::nn::gradcheck::{grad_check, GradCheckReport, Objective};
use crate::nn::{Adam, Checkpoint, Real};
use crate::preprocess::{Pipeline, PreparedChannel};
use crate::scenet::{MultiRateOutput, Scenet};
use crate::seed::rng_for;
use crate::{Error, Result};

/// Per-rate weights `{30, 6, 2, 1} / 39`.
pub fn default_rate_weights() -> Vec<f64> {
    [30.0, 6.0, 2.0, 1.0].iter().map(|w| w / 39.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `W_s · ‖H − Ĥ_s‖²_F`.
    Squared,
    /// `W_s · ‖H − Ĥ_s‖_F`.
    Unsquared,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "unsquared" => Ok(LossKind::Unsquared),
            o => Err(Error::config(format!("unknown loss {o:?} (squared|unsquared)"))),
        }
    }
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Unsquared => "unsquared",
        }
    }
}

fn check_rates<T>(target: &[T], out: &MultiRateOutput<T>, weights: &[f64]) -> Result<()> {
    if out.reconstructions.len() != weights.len() {
        return Err(Error::shape(format!(
            "{} rate weights for {} reconstructions",
            weights.len(),
            out.reconstructions.len()
        )));
    }
    if let Some(r) = out.reconstructions.iter().find(|r| r.len() != target.len()) {
        return Err(Error::shape(format!(
            "reconstruction of {} values for a {}-value target",
            r.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Loss of one sample and its gradient with respect to every reconstruction,
/// both multiplied by `scale`.
pub fn sample_loss_grad<T: Real>(
    target: &[T],
    out: &MultiRateOutput<T>,
    weights: &[f64],
    kind: LossKind,
    scale: T,
) -> Result<(T, Vec<Vec<T>>)> {
    check_rates(target, out, weights)?;
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(weights.len());
    for (rec, &w) in out.reconstructions.iter().zip(weights) {
        let w = T::from_f64(w);
        let sq: T = rec.iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let (term, coeff) = match kind {
            LossKind::Squared => (w * sq, T::from_f64(2.0) * w * scale),
            LossKind::Unsquared => {
                let norm = sq.sqrt();
                let c = if norm > T::zero() { w * scale / norm } else { T::zero() };
                (w * norm, c)
            }
        };
        loss += term;
        grads.push(rec.iter().zip(target).map(|(&a, &b)| coeff * (a - b)).collect());
    }
    Ok((loss * scale, grads))
}

/// Batch criterion: mean over samples of `Σ_s W_s · err_s`.
pub fn weighted_loss<T: Real>(
    targets: &[Vec<T>],
    outputs: &[MultiRateOutput<T>],
    weights: &[f64],
    kind: LossKind,
) -> Result<T> {
    if targets.len() != outputs.len() || targets.is_empty() {
        return Err(Error::shape(format!(
            "{} targets vs {} outputs",
            targets.len(),
            outputs.len()
        )));
    }
    let scale = T::from_f64(1.0 / targets.len() as f64);
    let mut total = T::zero();
    for (t, o) in targets.iter().zip(outputs) {
        total += sample_loss_grad(t, o, weights, kind, scale)?.0;
    }
    Ok(total)
}

/// Single-sample criterion as a function of the model parameters, in 64-bit.
pub struct ScenetObjective<'a> {
    pub model: &'a Scenet,
    pub segment: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: LossKind,
}

impl Objective for ScenetObjective<'_> {
    fn num_params(&self) -> usize {
        self.model.num_params()
    }

    fn loss(&self, params: &[f64]) -> Result<(f64, u64)> {
        let trace = self.model.forward_trace(params, &self.segment)?;
        let (loss, _) = sample_loss_grad(&self.segment, &trace.output, &self.weights, self.kind, 1.0)?;
        Ok((loss, trace.activation_pattern()))
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let trace = self.model.forward_trace(params, &self.segment)?;
        let (_, d) = sample_loss_grad(&self.segment, &trace.output, &self.weights, self.kind, 1.0)?;
        let mut grads = vec![0.0; params.len()];
        self.model.backward(params, &trace, &d, &mut grads)?;
        Ok(grads)
    }
}

/// End-to-end gradient check of the model at `params` on one segment.
pub fn grad_check_model(
    model: &Scenet,
    params: &[f32],
    segment: &[f32],
    weights: &[f64],
    eps: f64,
) -> Result<GradCheckReport> {
    let obj = ScenetObjective {
        model,
        segment: segment.iter().map(|&v| f64::from(v)).collect(),
        weights: weights.to_vec(),
        kind: LossKind::Squared,
    };
    let p64: Vec<f64> = params.iter().map(|&v| f64::from(v)).collect();
    grad_check(&obj, &p64, eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_after: f64,
    /// First epoch (0-based) trained at `lr_after`.
    pub lr_switch_epoch: usize,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    /// 1000 epochs, batch 200, 1e-3 switching to 5e-4 after epoch 300.
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 200,
            lr: 1e-3,
            lr_after: 5e-4,
            lr_switch_epoch: 300,
            weights: default_rate_weights(),
            seed: 0,
            loss: LossKind::Squared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, stages: usize, train_len: usize) -> Result<()> {
        if self.weights.len() != stages {
            return Err(Error::config(format!(
                "{} rate weights for {stages} rates",
                self.weights.len()
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::config(format!(
                "rate weights must be non-negative and sum to 1 (sum {sum})"
            )));
        }
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(Error::config(format!(
                "batch size {} must lie in 1..={train_len}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr_after > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch < self.lr_switch_epoch {
            self.lr
        } else {
            self.lr_after
        }
    }
}

/// Mutable training state; everything needed to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Vec<f32>,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_loss: f64,
    pub best_params: Vec<f32>,
    pub best_epoch: Option<usize>,
}

impl TrainState {
    pub fn fresh(model: &Scenet, cfg: &TrainConfig) -> Self {
        let params = model.init_params(cfg.seed);
        Self {
            adam: Adam::new(params.len(), cfg.lr as f32),
            best_params: params.clone(),
            params,
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn to_checkpoint(&self, model: &Scenet, seed: u64, norm_scale: f64) -> Checkpoint {
        Checkpoint {
            arch: model.config().canonical(),
            epoch: self.epoch as u64,
            rng_seed: seed,
            norm_scale,
            best_val_loss: self.best_val_loss,
            params: self.params.clone(),
            adam: self.adam.clone(),
        }
    }

    /// Restores from the latest checkpoint and, when available, the best one.
    pub fn from_checkpoints(last: Checkpoint, best: Option<Checkpoint>) -> Self {
        let (best_params, best_epoch) = match best {
            Some(b) => (b.params, Some(b.epoch as usize)),
            None => (last.params.clone(), None),
        };
        Self {
            params: last.params,
            adam: last.adam,
            epoch: last.epoch as usize,
            best_val_loss: last.best_val_loss,
            best_params,
            best_epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation NMSE (dB) per rate.
    pub val_nmse_db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub wall_time: Duration,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
}

impl TrainReport {
    /// CSV with a config-hash comment line; wall time is deliberately excluded
    /// so identical runs produce identical bytes.
    pub fn to_csv(&self, config_hash: &str, stages: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config {config_hash}");
        s.push_str("epoch,loss");
        for i in 1..=stages {
            let _ = write!(s, ",nmse_cr{}", 1usize << i);
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{:.9e}", r.epoch, r.train_loss);
            for v in &r.val_nmse_db {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }
}

/// Where to write checkpoints during training.
#[derive(Debug, Clone)]
pub struct CheckpointDir {
    pub dir: PathBuf,
    pub norm_scale: f64,
}

impl CheckpointDir {
    pub fn best(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }
    pub fn last(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }
}

/// Validation data: prepared channels plus the pipeline that produced them.
pub struct Validation<'a> {
    pub channels: &'a [PreparedChannel],
    pub pipeline: &'a Pipeline,
}

/// One optimizer step over `batch`; returns the batch loss.
fn train_batch(
    model: &Scenet,
    state: &mut TrainState,
    batch: &[&[f32]],
    cfg: &TrainConfig,
    grads: &mut [f32],
) -> Result<f64> {
    grads.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f32;
    let mut loss = 0.0f64;
    for seg in batch {
        let trace = model.forward_trace(&state.params, seg)?;
        let (l, d) = sample_loss_grad(seg, &trace.output, &cfg.weights, cfg.loss, scale)?;
        loss += f64::from(l);
        model.backward(&state.params, &trace, &d, grads)?;
    }
    state.adam.step(&mut state.params, grads)?;
    Ok(loss)
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Diverged { epoch },
        other => other,
    }
}

/// Trains until `cfg.epochs` epochs are complete, continuing from `state`.
///
/// Shuffle order of epoch `e` depends only on `(cfg.seed, e)`, so a run
/// resumed from a checkpoint follows the uninterrupted trajectory exactly.
pub fn train(
    model: &Scenet,
    state: &mut TrainState,
    train_set: &[Vec<f32>],
    val: &Validation<'_>,
    cfg: &TrainConfig,
    checkpoints: Option<&CheckpointDir>,
) -> Result<TrainReport> {
    let started = Instant::now();
    let mut records = Vec::new();
    if state.epoch < cfg.epochs {
        cfg.validate(model.config().stages, train_set.len())?;
    }
    if let Some(c) = checkpoints {
        std::fs::create_dir_all(&c.dir)?;
    }
    let mut grads = vec![0f32; model.num_params()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let number = epoch + 1;
        state.adam.lr = cfg.lr_for_epoch(epoch) as f32;
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut rng_for(cfg.seed, "shuffle", epoch as u64));

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f32]> = chunk.iter().map(|&i| train_set[i].as_slice()).collect();
            let l = train_batch(model, state, &batch, cfg, &mut grads).map_err(diverged(number))?;
            loss_sum += l * batch.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch: number });
        }

        let summary = eval::evaluate_prepared(model, &state.params, val.pipeline, val.channels, &cfg.weights)
            .map_err(diverged(number))?;
        if !summary.weighted_loss.is_finite() {
            return Err(Error::Diverged { epoch: number });
        }
        state.epoch = number;
        if summary.weighted_loss < state.best_val_loss {
            state.best_val_loss = summary.weighted_loss;
            state.best_params.clone_from(&state.params);
            state.best_epoch = Some(number);
            if let Some(c) = checkpoints {
                state.to_checkpoint(model, cfg.seed, c.norm_scale).save(c.best())?;
            }
        }
        if let Some(c) = checkpoints {
            state.to_checkpoint(model, cfg.seed, c.norm_scale).save(c.last())?;
        }
        records.push(EpochRecord {
            epoch: number,
            train_loss,
            val_loss: summary.weighted_loss,
            val_nmse_db: summary.nmse_linear.iter().map(|&v| to_db(v)).collect(),
        });
    }
    Ok(TrainReport {
        records,
        wall_time: started.elapsed(),
        best_epoch: state.best_epoch,
        best_val_loss: state.best_val_loss,
    })
}

/// Loads `last.ckpt` (and `best.ckpt` when present) from a checkpoint directory.
pub fn resume_from_dir(dir: &Path, arch: &str) -> Result<(TrainState, f64)> {
    let last = Checkpoint::load(dir.join("last.ckpt"), Some(arch))?;
    let best_path = dir.join("best.ckpt");
    let best = if best_path.exists() {
        Some(Checkpoint::load(best_path, Some(arch))?)
    } else {
        None
    };
    let norm = last.norm_scale;
    Ok((TrainState::from_checkpoints(last, best), norm))
}
