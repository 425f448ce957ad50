use serde::{Deserialize, Serialize};

use super::ops::{self, conv1d_relu, conv2d_relu, maxpool2};
use super::params::{Parameters, TrainedModel};
use super::spec::{Family, ModelSpec};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};

/// Which class score is differentiated or differenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    /// Softmax posterior of the target class.
    Posterior,
    /// Pre-softmax logit of the target class.
    Logit,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub n_frames: usize,
    /// TDNN: `[mel][t]`; CNN: `[t][mel]` (one channel).
    pub input: Vec<f64>,
    /// Post-ReLU output of each conv layer, `[c][t]` or `[c][h][w]`.
    pub conv: Vec<Vec<f64>>,
    /// CNN max-pool outputs, one per conv layer; empty for TDNN.
    pub pooled: Vec<Vec<f64>>,
    pool_idx: Vec<Vec<u32>>,
    /// Temporal statistics: all means, then all standard deviations.
    pub stats: Vec<f64>,
    pub embed_pre: Vec<f64>,
    pub embed: Vec<f64>,
    pub logits: Vec<f64>,
    pub posteriors: Vec<f64>,
}

/// (channels, height, width) of an activation grid.
pub(crate) type Dims = (usize, usize, usize);

pub(crate) fn conv_input_dims(spec: &ModelSpec, l: usize, t: usize) -> Dims {
    match spec.family {
        Family::Tdnn => (spec.conv_in_channels(l), t, 1),
        Family::Cnn => (spec.conv_in_channels(l), t >> l, spec.n_mels >> l),
    }
}

pub(crate) fn conv_output_dims(spec: &ModelSpec, l: usize, t: usize) -> Dims {
    let (_, h, w) = conv_input_dims(spec, l, t);
    (spec.convs[l].channels, h, w)
}

/// Dimensions of the grid fed to statistics pooling.
fn stats_input_dims(spec: &ModelSpec, t: usize) -> Dims {
    let last = spec.convs.len() - 1;
    let (c, h, w) = conv_output_dims(spec, last, t);
    match spec.family {
        Family::Tdnn => (c, h, w),
        Family::Cnn => (c, h / 2, w / 2),
    }
}

impl ForwardTrace {
    /// Activation maps `{A^k}` of the explained layer with their (channels, time, freq) dims.
    pub fn activation_maps(&self, spec: &ModelSpec) -> (&[f64], (usize, usize, usize)) {
        let last = spec.convs.len() - 1;
        (&self.conv[last], conv_output_dims(spec, last, self.n_frames))
    }

    fn stats_input<'a>(&'a self, spec: &ModelSpec) -> &'a [f64] {
        match spec.family {
            Family::Tdnn => self.conv.last().expect("conv"),
            Family::Cnn => self.pooled.last().expect("pool"),
        }
    }
}

fn layout_input(spec: &ModelSpec, x: &MelSpectrogram) -> Result<Vec<f64>> {
    if x.n_mels != spec.n_mels {
        return Err(Error::Dimension(format!(
            "input has {} mel bins, model expects {}",
            x.n_mels, spec.n_mels
        )));
    }
    if x.n_frames < spec.min_frames() {
        return Err(Error::Dimension(format!(
            "input has {} frames, model needs at least {}",
            x.n_frames,
            spec.min_frames()
        )));
    }
    let (t, f) = (x.n_frames, x.n_mels);
    Ok(match spec.family {
        Family::Tdnn => {
            let mut out = vec![0.0; t * f];
            for ti in 0..t {
                for m in 0..f {
                    out[m * t + ti] = x.values[ti * f + m] as f64;
                }
            }
            out
        }
        Family::Cnn => x.to_f64(),
    })
}

/// Stateless head evaluation: stats -> embed -> logits.
fn head(model: &TrainedModel, stats_in: &[f64], t: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c, h, w) = stats_input_dims(&model.spec, t);
    let stats = ops::stats_pool_grid(stats_in, c, h, w);
    let embed_pre = ops::dense(&model.params.embed, &stats);
    let embed: Vec<f64> = embed_pre.iter().map(|v| v.max(0.0)).collect();
    let logits = ops::dense(&model.params.classifier, &embed);
    (stats, embed_pre, embed, logits)
}

/// Runs conv layer `l` over output range `[lo, hi)` (columns for TDNN, rows for CNN).
fn run_conv(model: &TrainedModel, l: usize, t: usize, input: &[f64], lo: usize, hi: usize, out: &mut [f64]) {
    let spec = &model.spec;
    let (cin, h, w) = conv_input_dims(spec, l, t);
    let conv = spec.convs[l];
    let p = &model.params.convs[l];
    match spec.family {
        Family::Tdnn => conv1d_relu(input, cin, h, p, conv.kernel, conv.channels, lo, hi, out),
        Family::Cnn => conv2d_relu(input, cin, h, w, p, conv.kernel, conv.channels, lo, hi, out),
    }
}

pub fn forward(model: &TrainedModel, x: &MelSpectrogram) -> Result<ForwardTrace> {
    let spec = &model.spec;
    let input = layout_input(spec, x)?;
    let t = x.n_frames;
    let n_layers = spec.convs.len();
    let mut conv: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut pool_idx: Vec<Vec<u32>> = Vec::new();
    for l in 0..n_layers {
        let (c, h, w) = conv_output_dims(spec, l, t);
        let mut out = vec![0.0; c * h * w];
        {
            let src: &[f64] = match (spec.family, l) {
                (_, 0) => &input,
                (Family::Tdnn, _) => conv[l - 1].as_slice(),
                (Family::Cnn, _) => pooled[l - 1].as_slice(),
            };
            run_conv(model, l, t, src, 0, h, &mut out);
        }
        if spec.family == Family::Cnn {
            let mut p = vec![0.0; c * (h / 2) * (w / 2)];
            let mut idx = vec![0u32; p.len()];
            maxpool2(&out, c, h, w, 0, h / 2, &mut p, &mut idx);
            pooled.push(p);
            pool_idx.push(idx);
        }
        conv.push(out);
    }
    let stats_in: &[f64] = match spec.family {
        Family::Tdnn => &conv[n_layers - 1],
        Family::Cnn => &pooled[n_layers - 1],
    };
    let (stats, embed_pre, embed, logits) = head(model, stats_in, t);
    let posteriors = ops::softmax(&logits);
    Ok(ForwardTrace {
        n_frames: t,
        input,
        conv,
        pooled,
        pool_idx,
        stats,
        embed_pre,
        embed,
        logits,
        posteriors,
    })
}

/// Temporal statistics pooling of a `[channel][time]` array:
/// per-channel mean followed by per-channel `sqrt(var + 1e-8)`.
pub fn stats_pool(frames: &[f64], channels: usize, t_len: usize) -> Result<Vec<f64>> {
    if t_len == 0 || frames.len() != channels * t_len {
        return Err(Error::Dimension(format!(
            "{} values for {channels} channels x {t_len} frames",
            frames.len()
        )));
    }
    Ok(ops::stats_pool_grid(frames, channels, t_len, 1))
}

/// Result of backpropagating a logit-space seed.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Parameter gradients, when requested.
    pub params: Option<Parameters>,
    /// Gradient at the explained activation maps, laid out like [`ForwardTrace::activation_maps`].
    pub activations: Vec<f64>,
}

pub(crate) fn backward(model: &TrainedModel, trace: &ForwardTrace, dlogits: &[f64], want_params: bool) -> Gradients {
    let spec = &model.spec;
    let t = trace.n_frames;
    let mut grads = want_params.then(|| Parameters::zeros(spec));
    let p = &model.params;

    let dembed = ops::dense_backward(&p.classifier, &trace.embed, dlogits, grads.as_mut().map(|g| &mut g.classifier));
    let dembed_pre: Vec<f64> = dembed
        .iter()
        .zip(&trace.embed_pre)
        .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
        .collect();
    let dstats = ops::dense_backward(&p.embed, &trace.stats, &dembed_pre, grads.as_mut().map(|g| &mut g.embed));
    let (c, h, w) = stats_input_dims(spec, t);
    let dstats_in = ops::stats_pool_grid_backward(trace.stats_input(spec), &trace.stats, &dstats, c, h, w);

    let last = spec.convs.len() - 1;
    // gradient w.r.t. post-ReLU output of conv `last`
    let mut dact = match spec.family {
        Family::Tdnn => dstats_in,
        Family::Cnn => {
            let (c, h, w) = conv_output_dims(spec, last, t);
            ops::maxpool2_backward(&dstats_in, &trace.pool_idx[last], c, h, w)
        }
    };
    let activations = dact.clone();
    let Some(mut g) = grads else {
        return Gradients {
            params: None,
            activations,
        };
    };

    for l in (0..=last).rev() {
        // through ReLU
        for (d, a) in dact.iter_mut().zip(&trace.conv[l]) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        let (cin, h, w) = conv_input_dims(spec, l, t);
        let conv = spec.convs[l];
        let src: &[f64] = match (spec.family, l) {
            (_, 0) => &trace.input,
            (Family::Tdnn, _) => &trace.conv[l - 1],
            (Family::Cnn, _) => &trace.pooled[l - 1],
        };
        let mut dsrc = (l > 0).then(|| vec![0.0; cin * h * w]);
        match spec.family {
            Family::Tdnn => ops::conv1d_backward(
                src,
                cin,
                h,
                &p.convs[l],
                conv.kernel,
                conv.channels,
                &dact,
                &mut g.convs[l],
                dsrc.as_deref_mut(),
            ),
            Family::Cnn => ops::conv2d_backward(
                src,
                cin,
                h,
                w,
                &p.convs[l],
                conv.kernel,
                conv.channels,
                &dact,
                &mut g.convs[l],
                dsrc.as_deref_mut(),
            ),
        }
        if let Some(dsrc) = dsrc {
            dact = match spec.family {
                Family::Tdnn => dsrc,
                Family::Cnn => {
                    let (c, h, w) = conv_output_dims(spec, l - 1, t);
                    ops::maxpool2_backward(&dsrc, &trace.pool_idx[l - 1], c, h, w)
                }
            };
        }
    }
    Gradients {
        params: Some(g),
        activations,
    }
}

/// Logits computed from (possibly perturbed) explained activation maps.
pub fn logits_from_activations(model: &TrainedModel, acts: &[f64], t: usize) -> Vec<f64> {
    let spec = &model.spec;
    match spec.family {
        Family::Tdnn => head(model, acts, t).3,
        Family::Cnn => {
            let last = spec.convs.len() - 1;
            let (c, h, w) = conv_output_dims(spec, last, t);
            let mut p = vec![0.0; c * (h / 2) * (w / 2)];
            let mut idx = vec![0u32; p.len()];
            maxpool2(acts, c, h, w, 0, h / 2, &mut p, &mut idx);
            head(model, &p, t).3
        }
    }
}

/// Seed in logit space for d(score_c)/d(logits).
pub(crate) fn score_seed(trace: &ForwardTrace, c: usize, score: Score) -> Vec<f64> {
    match score {
        Score::Logit => (0..trace.logits.len()).map(|j| if j == c { 1.0 } else { 0.0 }).collect(),
        Score::Posterior => {
            let pc = trace.posteriors[c];
            trace
                .posteriors
                .iter()
                .enumerate()
                .map(|(j, pj)| pc * (if j == c { 1.0 } else { 0.0 } - pj))
                .collect()
        }
    }
}

/// Gradient of the class-`c` score with respect to the explained activation maps.
pub fn backward_to_layer(model: &TrainedModel, trace: &ForwardTrace, c: usize, score: Score) -> Result<Vec<f64>> {
    if c >= model.spec.n_speakers {
        return Err(Error::Index(format!(
            "class {c} out of range for {} speakers",
            model.spec.n_speakers
        )));
    }
    if trace.logits.len() != model.spec.n_speakers {
        return Err(Error::Dimension("trace was not produced by this model".into()));
    }
    Ok(backward(model, trace, &score_seed(trace, c, score), false).activations)
}

/// Re-evaluates a model on inputs that differ from a cached clean pass in a
/// contiguous block of frames, recomputing only the affected region of each
/// conv layer.
pub struct OcclusionSession<'m> {
    model: &'m TrainedModel,
    clean: ForwardTrace,
    input: Vec<f64>,
    conv: Vec<Vec<f64>>,
    pooled: Vec<Vec<f64>>,
    pool_idx: Vec<Vec<u32>>,
}

impl<'m> OcclusionSession<'m> {
    pub fn new(model: &'m TrainedModel, x: &MelSpectrogram) -> Result<Self> {
        let clean = forward(model, x)?;
        Ok(Self {
            model,
            input: clean.input.clone(),
            conv: clean.conv.clone(),
            pooled: clean.pooled.clone(),
            pool_idx: clean.pool_idx.clone(),
            clean,
        })
    }

    pub fn model(&self) -> &'m TrainedModel {
        self.model
    }

    pub fn clean(&self) -> &ForwardTrace {
        &self.clean
    }

    /// Logits for the input with frames `[start, start + n)` replaced by `patch` (`n x n_mels`, row-major).
    pub fn logits_with_patch(&mut self, start: usize, patch: &[f64]) -> Result<Vec<f64>> {
        let spec = &self.model.spec;
        let t = self.clean.n_frames;
        let f = spec.n_mels;
        if patch.len() % f != 0 || start + patch.len() / f > t {
            return Err(Error::Dimension(format!(
                "patch of {} values at frame {start} does not fit {t} x {f}",
                patch.len()
            )));
        }
        let n = patch.len() / f;
        if n == 0 {
            return Ok(self.clean.logits.clone());
        }
        for r in 0..n {
            for m in 0..f {
                let i = match spec.family {
                    Family::Tdnn => m * t + start + r,
                    Family::Cnn => (start + r) * f + m,
                };
                self.input[i] = patch[r * f + m];
            }
        }
        let mut touched = Vec::with_capacity(spec.convs.len());
        let (mut lo, mut hi) = (start, start + n);
        for l in 0..spec.convs.len() {
            let (_, h, _) = conv_output_dims(spec, l, t);
            let pad = spec.convs[l].kernel / 2;
            let (a, b) = (lo.saturating_sub(pad), (hi + pad).min(h));
            let (done, rest) = self.conv.split_at_mut(l);
            let src: &[f64] = match (spec.family, l) {
                (_, 0) => &self.input,
                (Family::Tdnn, _) => &done[l - 1],
                (Family::Cnn, _) => &self.pooled[l - 1],
            };
            run_conv(self.model, l, t, src, a, b, &mut rest[0]);
            let (mut pa, mut pb) = (a, b);
            if spec.family == Family::Cnn {
                let (c, h, w) = conv_output_dims(spec, l, t);
                pa = a / 2;
                pb = b.div_ceil(2).min(h / 2);
                if pb > pa {
                    maxpool2(&self.conv[l], c, h, w, pa, pb, &mut self.pooled[l], &mut self.pool_idx[l]);
                }
            }
            touched.push(((a, b), (pa, pb)));
            lo = pa;
            hi = pb;
        }
        let stats_in: &[f64] = match spec.family {
            Family::Tdnn => self.conv.last().expect("conv"),
            Family::Cnn => self.pooled.last().expect("pool"),
        };
        let logits = head(self.model, stats_in, t).3;
        self.restore(start, n, &touched);
        Ok(logits)
    }

    fn restore(&mut self, start: usize, n: usize, touched: &[((usize, usize), (usize, usize))]) {
        let spec = &self.model.spec;
        let t = self.clean.n_frames;
        let f = spec.n_mels;
        match spec.family {
            Family::Tdnn => {
                for m in 0..f {
                    let r = m * t + start..m * t + start + n;
                    self.input[r.clone()].copy_from_slice(&self.clean.input[r]);
                }
            }
            Family::Cnn => {
                let r = start * f..(start + n) * f;
                self.input[r.clone()].copy_from_slice(&self.clean.input[r]);
            }
        }
        for (l, &((a, b), (pa, pb))) in touched.iter().enumerate() {
            let (c, h, w) = conv_output_dims(spec, l, t);
            for ch in 0..c {
                let r = ch * h * w + a * w..ch * h * w + b * w;
                self.conv[l][r.clone()].copy_from_slice(&self.clean.conv[l][r]);
            }
            if spec.family == Family::Cnn && pb > pa {
                let (ho, wo) = (h / 2, w / 2);
                for ch in 0..c {
                    let r = ch * ho * wo + pa * wo..ch * ho * wo + pb * wo;
                    self.pooled[l][r.clone()].copy_from_slice(&self.clean.pooled[l][r.clone()]);
                    self.pool_idx[l][r.clone()].copy_from_slice(&self.clean.pool_idx[l][r]);
                }
            }
        }
    }
}

#[cfg(test)]
#[path = "model_tests.rs"]
mod tests;
