//! From-scratch training of the recurrent predictors.
//!
//! Samples are (scene, target) pairs prepared lazily per batch. Per-sample
//! gradients are computed in parallel and summed in sample order, so results
//! do not depend on the worker count.

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, grad_check, grad_check_with_step, GradCheckReport, FD_STEP};
pub use loss::{wta_loss, CLASSIFICATION_WEIGHT};
pub use optim::{clip_global_norm, Adam};

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::Normalizer;
use crate::nn::{ParamStore, Tape};
use crate::predict::{PreparedSample, RecurrentModel, FEATURE_DIM, PASSTHROUGH_COLUMNS};
use crate::rng;
use crate::scene::{AgentId, Scene};
use loss::{wta_terms, WtaTerms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch; 1 keeps it constant.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub patience: usize,
    /// Keep the incoming normalizer instead of refitting it on the training split.
    pub fine_tune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            clip_norm: 1.0,
            seed: 0,
            validation_fraction: 0.1,
            patience: 5,
            fine_tune: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, batch_size and patience must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("moment decays must lie in (0, 1)".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Seconds; excluded from any determinism comparison.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// `(epoch, train_loss, val_loss)` triples without timing.
    pub fn losses(&self) -> Vec<(usize, f64, f64)> {
        self.epochs.iter().map(|e| (e.epoch, e.train_loss, e.val_loss)).collect()
    }
}

/// Scenes of an augmented dataset share the id prefix before `~`; the split
/// keeps every original with its perturbed copies.
fn group_key(scene: &Scene) -> &str {
    scene.id.0.split('~').next().unwrap_or("")
}

/// Seeded train/validation split over scene groups; returns scene indices.
pub fn split_dataset(dataset: &[Scene], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in dataset.iter().enumerate() {
        let key = group_key(s);
        members
            .entry(key)
            .or_insert_with(|| {
                groups.push(key);
                Vec::new()
            })
            .push(i);
    }
    let mut order = groups.clone();
    order.shuffle(&mut rng::stream(seed, &[b"split"]));
    let n_val = if order.len() < 2 {
        0
    } else {
        ((order.len() as f64 * fraction).round() as usize).clamp(1, order.len() - 1)
    };
    let val_groups: std::collections::HashSet<&str> = order[..n_val].iter().copied().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for g in groups {
        let dst = if val_groups.contains(g) { &mut val } else { &mut train };
        dst.extend(&members[g]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn samples_of(dataset: &[Scene], scenes: &[usize]) -> Vec<(usize, AgentId)> {
    scenes
        .iter()
        .flat_map(|i| dataset[*i].targets.iter().map(move |t| (*i, *t)))
        .collect()
}

/// Streaming per-column mean and population variance (Chan et al. merge).
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.n += 1.0;
        for (i, x) in row.iter().enumerate() {
            let d = x - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x - self.mean[i]);
        }
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        for i in 0..self.mean.len() {
            let d = o.mean[i] - self.mean[i];
            self.mean[i] += d * o.n / n;
            self.m2[i] += o.m2[i] + d * d * self.n * o.n / n;
        }
        self.n = n;
    }
}

/// Fits the feature normalizer on the rows the model reads for these samples.
pub fn fit_model_normalizer(model: &RecurrentModel, dataset: &[Scene], samples: &[(usize, AgentId)]) -> Result<Normalizer> {
    let parts: Vec<Result<Moments>> = samples
        .par_iter()
        .map(|(i, t)| {
            let mut m = Moments::new(FEATURE_DIM);
            for r in model.feature_rows(&dataset[*i], *t)? {
                m.push(&r);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new(FEATURE_DIM);
    for p in parts {
        total.merge(&p?);
    }
    if total.n == 0.0 {
        return Err(Error::EmptyInput("feature rows"));
    }
    let std = total
        .m2
        .iter()
        .map(|m| (m / total.n).sqrt().max(crate::frames::STD_FLOOR))
        .collect();
    Ok(Normalizer { mean: total.mean, std }.with_passthrough(&PASSTHROUGH_COLUMNS))
}

/// Loss terms of one prepared sample on an arbitrary parameter store.
pub(crate) fn sample_terms(model: &RecurrentModel, params: &ParamStore, sample: &PreparedSample) -> Result<Option<WtaTerms>> {
    let mut tape = Tape::new(params);
    let out = model.forward(&mut tape, sample)?;
    let positions: Vec<&[f64]> = out.positions.iter().map(|p| tape.value(*p)).collect();
    Ok(wta_terms(&positions, tape.value(out.logits), &sample.future, &sample.future_valid))
}

/// Loss of one sample and its gradient accumulated into `grad`.
pub(crate) fn sample_gradient(model: &RecurrentModel, sample: &PreparedSample, grad: &mut [f64]) -> Result<Option<WtaTerms>> {
    let mut tape = Tape::new(model.params());
    let out = model.forward(&mut tape, sample)?;
    let positions: Vec<&[f64]> = out.positions.iter().map(|p| tape.value(*p)).collect();
    let Some(terms) = wta_terms(&positions, tape.value(out.logits), &sample.future, &sample.future_valid) else {
        return Ok(None);
    };
    let mut seeds: Vec<(crate::nn::Var, &[f64])> = out
        .positions
        .iter()
        .zip(&terms.position_grad)
        .map(|(v, g)| (*v, g.as_slice()))
        .collect();
    seeds.push((out.logits, &terms.logit_grad));
    tape.backward(&seeds, grad);
    Ok(Some(terms))
}

/// Mean loss over samples; samples without any valid future step are skipped.
pub fn mean_loss(model: &RecurrentModel, dataset: &[Scene], samples: &[(usize, AgentId)]) -> Result<f64> {
    let losses: Vec<Result<Option<f64>>> = samples
        .par_iter()
        .map(|(i, t)| {
            let s = model.prepare(&dataset[*i], *t)?;
            Ok(sample_terms(model, model.params(), &s)?.map(|x| x.loss))
        })
        .collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for l in losses {
        if let Some(l) = l? {
            sum += l;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn batch_gradient(model: &RecurrentModel, dataset: &[Scene], batch: &[(usize, AgentId)]) -> Result<(f64, usize, Vec<f64>)> {
    type Part = Result<Option<(f64, Vec<f64>)>>;
    let parts: Vec<Part> = batch
        .par_iter()
        .map(|(i, t)| {
            let s = model.prepare(&dataset[*i], *t)?;
            let mut g = vec![0.0; model.num_parameters()];
            Ok(sample_gradient(model, &s, &mut g)?.map(|terms| (terms.loss, g)))
        })
        .collect();
    let mut grad = vec![0.0; model.num_parameters()];
    let (mut loss, mut n) = (0.0, 0usize);
    for p in parts {
        if let Some((l, g)) = p? {
            loss += l;
            n += 1;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
    Ok((loss, n, grad))
}

pub fn train(model: RecurrentModel, dataset: &[Scene], config: &TrainConfig) -> Result<(RecurrentModel, TrainHistory)> {
    train_with_observer(model, dataset, config, &mut |_| {})
}

/// Like [`train`], calling `observer` after every epoch.
pub fn train_with_observer(
    mut model: RecurrentModel,
    dataset: &[Scene],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(RecurrentModel, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let (train_idx, val_idx) = split_dataset(dataset, config.validation_fraction, config.seed);
    let mut train_samples = samples_of(dataset, &train_idx);
    let mut val_samples = samples_of(dataset, &val_idx);
    if train_samples.is_empty() {
        return Err(Error::EmptyInput("training targets"));
    }
    if val_samples.is_empty() {
        val_samples = train_samples.clone();
    }
    if !config.fine_tune {
        let norm = fit_model_normalizer(&model, dataset, &train_samples)?;
        model.set_normalizer(norm)?;
    }

    let initial_val_loss = mean_loss(&model, dataset, &val_samples)?;
    let mut best = (initial_val_loss, 0usize, model.params().data().to_vec());
    let mut opt = Adam::new(model.num_parameters(), config.learning_rate, config.beta1, config.beta2);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        opt.learning_rate = config.learning_rate * config.lr_decay.powi(epoch as i32 - 1);
        train_samples.shuffle(&mut rng::stream(config.seed, &[b"epoch", &(epoch as u64).to_le_bytes()]));
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        for (b, batch) in train_samples.chunks(config.batch_size).enumerate() {
            let (loss, n, mut grad) = batch_gradient(&model, dataset, batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            if n == 0 {
                continue;
            }
            loss_sum += loss;
            loss_n += n;
            grad.iter_mut().for_each(|g| *g /= n as f64);
            clip_global_norm(&mut grad, config.clip_norm);
            opt.step(model.params_mut().data_mut(), &grad);
        }
        let val_loss = mean_loss(&model, dataset, &val_samples)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: usize::MAX,
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 },
            val_loss,
            wall_time: start.elapsed().as_secs_f64(),
        };
        observer(&record);
        epochs.push(record);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params().data().to_vec());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().data_mut().copy_from_slice(&best.2);
    Ok((
        model,
        TrainHistory {
            initial_val_loss,
            epochs,
            best_epoch: best.1,
            stopped_early,
        },
    ))
}
