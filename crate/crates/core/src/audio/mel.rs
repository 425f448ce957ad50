use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::util;

/// Feature extraction parameters. Serialized field names are the on-disk config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    pub cmvn: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_mels: 64,
            fmin: 20.0,
            fmax: 8000.0,
            log_floor: 1e-10,
            cmvn: true,
        }
    }
}

impl FeatureConfig {
    pub fn frame_len_samples(&self) -> usize {
        (self.frame_len_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_len_s(&self) -> f64 {
        self.frame_len_samples() as f64 / self.sample_rate as f64
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_samples() as f64 / self.sample_rate as f64
    }

    /// Closed-form frame count; no partial trailing frame.
    pub fn n_frames(&self, n_samples: usize) -> Option<usize> {
        let len = self.frame_len_samples();
        (n_samples >= len).then(|| (n_samples - len) / self.hop_samples() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sample_rate > 0
            && self.frame_len_samples() > 0
            && self.hop_samples() > 0
            && self.n_fft >= self.frame_len_samples()
            && self.n_mels > 0
            && self.fmin >= 0.0
            && self.fmax > self.fmin
            && self.fmax <= self.sample_rate as f64 / 2.0
            && self.log_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid feature config {self:?}")))
        }
    }
}

/// Log-mel features, `n_frames` rows of `n_mels` values (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_hop_s: f64,
    pub frame_len_s: f64,
}

impl MelSpectrogram {
    pub fn new(values: Vec<f32>, n_frames: usize, n_mels: usize, frame_hop_s: f64, frame_len_s: f64) -> Result<Self> {
        if n_frames == 0 || n_mels == 0 || values.len() != n_frames * n_mels {
            return Err(Error::Dimension(format!(
                "{} values for {n_frames} x {n_mels} spectrogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spectrogram contains non-finite values".into()));
        }
        Ok(Self {
            values,
            n_frames,
            n_mels,
            frame_hop_s,
            frame_len_s,
        })
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Copy of frames `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.n_frames);
        Self {
            values: self.values[start * self.n_mels..end * self.n_mels].to_vec(),
            n_frames: end - start,
            ..*self
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Serialized form: little-endian `T: u32`, `F: u32`, then `T*F` f32 row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], frame_hop_s: f64, frame_len_s: f64) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("feature dump shorter than header".into()));
        }
        let t = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let f = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + 4 * t * f {
            return Err(Error::Format(format!(
                "feature dump declares {t}x{f} but holds {} payload bytes",
                bytes.len() - 8
            )));
        }
        let values = bytes[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(values, t, f, frame_hop_s, frame_len_s)
    }
}

pub fn write_feature_dump(path: impl AsRef<Path>, m: &MelSpectrogram) -> Result<()> {
    util::write_atomic(path.as_ref(), &m.to_bytes())
}

pub fn read_feature_dump(path: impl AsRef<Path>, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    MelSpectrogram::from_bytes(&util::read(path.as_ref())?, cfg.hop_s(), cfg.frame_len_s())
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters, `n_mels` rows of `n_fft / 2 + 1` weights peaking at 1.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.n_fft / 2 + 1;
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Centre frequency in Hz of mel filter `m`.
pub fn mel_center_hz(cfg: &FeatureConfig, m: usize) -> f64 {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    mel_to_hz(lo + (hi - lo) * (m + 1) as f64 / (cfg.n_mels + 1) as f64)
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Log filterbank energies before any normalization, in f64.
fn log_mel_f64(w: &Waveform, cfg: &FeatureConfig) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "waveform rate {} does not match feature rate {}; resample first",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let frame_len = cfg.frame_len_samples();
    let hop = cfg.hop_samples();
    let n_frames = cfg.n_frames(w.samples.len()).ok_or(Error::TooShort {
        got: w.samples.len(),
        need: frame_len,
    })?;
    let window = hamming(frame_len);
    let bank = mel_filterbank(cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0f64; n_bins];
    let mut out = Vec::with_capacity(n_frames * cfg.n_mels);
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frame_len {
                Complex::new(w.samples[start + i] as f64 * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        for filt in &bank {
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            out.push(e.max(cfg.log_floor).ln());
        }
    }
    Ok((out, n_frames))
}

/// Log-mel energies without normalization.
pub fn log_mel_energies(w: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    let (v, n_frames) = log_mel_f64(w, cfg)?;
    MelSpectrogram::new(
        v.into_iter().map(|x| x as f32).collect(),
        n_frames,
        cfg.n_mels,
        cfg.hop_s(),
        cfg.frame_len_s(),
    )
}

/// Log-mel features with optional per-utterance mean/variance normalization per mel bin.
pub fn mel_spectrogram(w: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    let (mut v, n_frames) = log_mel_f64(w, cfg)?;
    if cfg.cmvn {
        cmvn(&mut v, n_frames, cfg.n_mels);
    }
    MelSpectrogram::new(
        v.into_iter().map(|x| x as f32).collect(),
        n_frames,
        cfg.n_mels,
        cfg.hop_s(),
        cfg.frame_len_s(),
    )
}

fn cmvn(v: &mut [f64], n_frames: usize, n_mels: usize) {
    for m in 0..n_mels {
        let col = || (0..n_frames).map(|t| v[t * n_mels + m]);
        let (lo, hi) = col().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo == hi {
            for t in 0..n_frames {
                v[t * n_mels + m] = 0.0;
            }
            continue;
        }
        let mean = col().sum::<f64>() / n_frames as f64;
        let var = col().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n_frames as f64;
        let inv = 1.0 / var.sqrt();
        for t in 0..n_frames {
            let x = &mut v[t * n_mels + m];
            *x = (*x - mean) * inv;
        }
    }
}
