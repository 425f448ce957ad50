use serde::{Deserialize, Serialize};

use super::{Method, SaliencyVector};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{OcclusionSession, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaoConfig {
    /// Occluded frames per position; odd.
    pub window: usize,
    /// Gaussian width in frames.
    pub sigma: f64,
}

impl Default for TaoConfig {
    fn default() -> Self {
        Self { window: 7, sigma: 2.0 }
    }
}

/// Anything that can score a spectrogram with a contiguous block of frames replaced.
pub trait OcclusionProbe {
    fn n_frames(&self) -> usize;
    fn n_mels(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn clean_logits(&mut self) -> Result<Vec<f64>>;
    /// Logits with frames `[start, start + patch.len() / n_mels)` replaced by `patch`.
    fn logits_with_patch(&mut self, start: usize, patch: &[f64]) -> Result<Vec<f64>>;
}

impl OcclusionProbe for OcclusionSession<'_> {
    fn n_frames(&self) -> usize {
        self.clean().n_frames
    }

    fn n_mels(&self) -> usize {
        self.model().spec.n_mels
    }

    fn n_classes(&self) -> usize {
        self.model().spec.n_speakers
    }

    fn clean_logits(&mut self) -> Result<Vec<f64>> {
        Ok(self.clean().logits.clone())
    }

    fn logits_with_patch(&mut self, start: usize, patch: &[f64]) -> Result<Vec<f64>> {
        OcclusionSession::logits_with_patch(self, start, patch)
    }
}

/// Counts model evaluations (one clean pass plus one per occlusion).
pub struct CountingProbe<P> {
    pub inner: P,
    pub evaluations: usize,
}

impl<P: OcclusionProbe> CountingProbe<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, evaluations: 0 }
    }
}

impl<P: OcclusionProbe> OcclusionProbe for CountingProbe<P> {
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    fn n_mels(&self) -> usize {
        self.inner.n_mels()
    }

    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn clean_logits(&mut self) -> Result<Vec<f64>> {
        self.evaluations += 1;
        self.inner.clean_logits()
    }

    fn logits_with_patch(&mut self, start: usize, patch: &[f64]) -> Result<Vec<f64>> {
        self.evaluations += 1;
        self.inner.logits_with_patch(start, patch)
    }
}

/// Gaussian-blurred copy of frames `[lo, hi)` of a row-major `T x F` array,
/// with the kernel renormalized over the window. Written as a weighted sum
/// of differences so time-constant input is reproduced exactly.
pub fn blur_window(x: &[f64], n_mels: usize, lo: usize, hi: usize, sigma: f64) -> Vec<f64> {
    let n = hi - lo;
    let mut out = vec![0.0; n * n_mels];
    for u in 0..n {
        let w: Vec<f64> = (0..n)
            .map(|v| {
                let d = u as f64 - v as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        let xu = &x[(lo + u) * n_mels..(lo + u + 1) * n_mels];
        let row = &mut out[u * n_mels..(u + 1) * n_mels];
        row.copy_from_slice(xu);
        for (v, wv) in w.iter().enumerate() {
            if v == u {
                continue;
            }
            let xv = &x[(lo + v) * n_mels..(lo + v + 1) * n_mels];
            let a = wv / z;
            for m in 0..n_mels {
                row[m] += a * (xv[m] - xu[m]);
            }
        }
    }
    out
}

/// TAO over any probe: `xi_t = logit_c(x) - logit_c(x with the window around t blurred)`.
pub fn tao_with<P: OcclusionProbe>(probe: &mut P, x: &MelSpectrogram, c: usize, cfg: &TaoConfig) -> Result<SaliencyVector> {
    if cfg.window == 0 || cfg.window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("TAO window must be odd, got {}", cfg.window)));
    }
    if !(cfg.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("TAO sigma must be positive, got {}", cfg.sigma)));
    }
    if c >= probe.n_classes() {
        return Err(Error::Index(format!("class {c} out of range for {} classes", probe.n_classes())));
    }
    let (t_len, f) = (x.n_frames, x.n_mels);
    if t_len == 0 || t_len != probe.n_frames() || f != probe.n_mels() {
        return Err(Error::Dimension(format!(
            "input is {t_len} x {f}, probe expects {} x {}",
            probe.n_frames(),
            probe.n_mels()
        )));
    }
    let xs = x.to_f64();
    let clean = probe.clean_logits()?[c];
    let h = cfg.window / 2;
    let mut values = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (lo, hi) = (t.saturating_sub(h), (t + h + 1).min(t_len));
        let patch = blur_window(&xs, f, lo, hi, cfg.sigma);
        values.push(clean - probe.logits_with_patch(lo, &patch)?[c]);
    }
    Ok(SaliencyVector {
        values,
        method: Method::Tao,
        target: c,
        normalized: false,
    })
}

/// TAO on a trained model of any architecture.
pub fn tao(model: &TrainedModel, x: &MelSpectrogram, c: usize, cfg: &TaoConfig) -> Result<SaliencyVector> {
    let mut session = OcclusionSession::new(model, x)?;
    tao_with(&mut session, x, c, cfg)
}
