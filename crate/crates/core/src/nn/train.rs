use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward};
use super::params::{Parameters, TrainedModel};
use super::spec::{Arch, ModelSpec};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub arch: Arch,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub crop_frames: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Tdnn1,
            lr: 1e-3,
            epochs: 20,
            batch: 32,
            seed: 0,
            crop_frames: 200,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: Parameters,
    v: Parameters,
}

impl Adam {
    pub fn new(spec: &ModelSpec, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Parameters::zeros(spec),
            v: Parameters::zeros(spec),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Cross-entropy loss and its parameter gradient for one utterance.
pub fn loss_and_gradients(model: &TrainedModel, x: &MelSpectrogram, label: usize) -> Result<(f64, Parameters)> {
    if label >= model.spec.n_speakers {
        return Err(Error::Index(format!("label {label} out of range")));
    }
    let trace = forward(model, x)?;
    let loss = cross_entropy(&trace.logits, label);
    let mut seed = trace.posteriors.clone();
    seed[label] -= 1.0;
    let grads = backward(model, &trace, &seed, true).params.expect("requested");
    Ok((loss, grads))
}

/// One Adam update on the mean cross-entropy of `batch`; returns the mean loss.
pub fn train_step(model: &mut TrainedModel, batch: &[(&MelSpectrogram, usize)], opt: &mut Adam) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let per_sample: Vec<(f64, Parameters)> = batch
        .par_iter()
        .map(|(x, y)| loss_and_gradients(model, x, *y))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = Parameters::zeros(&model.spec);
    let mut loss = 0.0;
    // fixed summation order keeps updates bit-reproducible
    for (l, g) in &per_sample {
        loss += l;
        total.add_scaled(g, scale);
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: opt.steps() as usize + 1,
            loss,
        });
    }
    opt.step(&mut model.params, &total);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub arch: String,
    pub steps: usize,
    pub epochs: Vec<EpochLog>,
}

/// Trains from a seeded initialization on random fixed-length crops.
///
/// Each epoch visits every utterance once in shuffled order, taking a random
/// `crop_frames` window (or the whole utterance if shorter). Parameters are
/// rounded to f32 at the end so the in-memory model equals its checkpoint.
pub fn train(spec: ModelSpec, data: &[(MelSpectrogram, usize)], cfg: &TrainingConfig) -> Result<(TrainedModel, TrainingReport)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training data".into()));
    }
    if cfg.batch == 0 || cfg.crop_frames < spec.min_frames() {
        return Err(Error::InvalidArgument(format!(
            "batch must be positive and crops at least {} frames",
            spec.min_frames()
        )));
    }
    if let Some((_, y)) = data.iter().find(|(_, y)| *y >= spec.n_speakers) {
        return Err(Error::Index(format!("label {y} out of range")));
    }
    let mut model = TrainedModel::init(spec, derive_seed(cfg.seed, "init"))?;
    model.seed = cfg.seed;
    let mut opt = Adam::new(&model.spec, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "crops"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let crops: Vec<(MelSpectrogram, usize)> = order
            .iter()
            .map(|&i| {
                let (x, y) = &data[i];
                let start = if x.n_frames > cfg.crop_frames {
                    rng.gen_range(0..=x.n_frames - cfg.crop_frames)
                } else {
                    0
                };
                (x.crop(start, cfg.crop_frames), *y)
            })
            .collect();
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in crops.chunks(cfg.batch) {
            let batch: Vec<(&MelSpectrogram, usize)> = chunk.iter().map(|(x, y)| (x, *y)).collect();
            sum += train_step(&mut model, &batch, &mut opt)?;
            batches += 1;
        }
        let mean_loss = sum / batches as f64;
        log::info!("{} epoch {}: loss {:.5}", model.spec.name(), epoch + 1, mean_loss);
        epochs.push(EpochLog {
            epoch: epoch + 1,
            mean_loss,
        });
    }
    model.quantize_f32();
    let report = TrainingReport {
        arch: model.spec.name(),
        steps: opt.steps() as usize,
        epochs,
    };
    Ok((model, report))
}

/// Fraction of utterances whose highest posterior is the true speaker.
pub fn top1_accuracy(model: &TrainedModel, data: &[(MelSpectrogram, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let hits: Vec<bool> = data
        .par_iter()
        .map(|(x, y)| {
            let trace = forward(model, x)?;
            Ok(argmax(&trace.posteriors) == *y)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
