use serde::{Deserialize, Serialize};

use super::{normalize_saliency, Method, SaliencyVector};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{backward_to_layer, forward, Family, Score, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerCamConfig {
    pub score: Score,
}

impl Default for LayerCamConfig {
    fn default() -> Self {
        Self { score: Score::Posterior }
    }
}

/// Class activation map over the explained layer's (time, frequency) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap2D {
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub target: usize,
}

/// `ReLU(sum_k ReLU(dS/dA^k) * A^k)` per grid cell.
fn cam(acts: &[f64], grads: &[f64], c: usize, cells: usize) -> Vec<f64> {
    let mut s = vec![0.0; cells];
    for k in 0..c {
        let a = &acts[k * cells..(k + 1) * cells];
        let g = &grads[k * cells..(k + 1) * cells];
        for i in 0..cells {
            s[i] += g[i].max(0.0) * a[i];
        }
    }
    s.iter_mut().for_each(|v| *v = v.max(0.0));
    s
}

fn require(model: &TrainedModel, family: Family, what: &str) -> Result<()> {
    if model.spec.family != family {
        return Err(Error::MethodMismatch(format!("{what} needs a {family:?} model, got {}", model.spec.name())));
    }
    Ok(())
}

pub fn layercam_map_cnn(model: &TrainedModel, x: &MelSpectrogram, c: usize, cfg: &LayerCamConfig) -> Result<SaliencyMap2D> {
    require(model, Family::Cnn, "CNN LayerCAM")?;
    let trace = forward(model, x)?;
    let grads = backward_to_layer(model, &trace, c, cfg.score)?;
    let (acts, (k, h, w)) = trace.activation_maps(&model.spec);
    Ok(SaliencyMap2D {
        values: cam(acts, &grads, k, h * w),
        height: h,
        width: w,
        target: c,
    })
}

/// Bilinear resize of a row-major `h x w` grid with half-pixel centres.
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |i: usize, n_in: usize, n_out: usize| {
        let x = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        let (r0, r1, fr) = coord(r, h, out_h);
        for q in 0..out_w {
            let (c0, c1, fc) = coord(q, w, out_w);
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bot = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out[r * out_w + q] = top * (1.0 - fr) + bot * fr;
        }
    }
    out
}

/// Normalized CAM, upsampled to `T x F` and summed over frequency.
pub fn layercam_cnn(model: &TrainedModel, x: &MelSpectrogram, c: usize, cfg: &LayerCamConfig) -> Result<SaliencyVector> {
    let map = layercam_map_cnn(model, x, c, cfg)?;
    let norm = normalize_saliency(&map.values);
    let (t, f) = (x.n_frames, x.n_mels);
    let up = upsample_bilinear(&norm, map.height, map.width, t, f);
    Ok(SaliencyVector {
        values: up.chunks(f).map(|row| row.iter().sum()).collect(),
        method: Method::LayerCam,
        target: c,
        normalized: true,
    })
}

pub fn layercam_tdnn(model: &TrainedModel, x: &MelSpectrogram, c: usize, cfg: &LayerCamConfig) -> Result<SaliencyVector> {
    require(model, Family::Tdnn, "TDNN LayerCAM")?;
    let trace = forward(model, x)?;
    let grads = backward_to_layer(model, &trace, c, cfg.score)?;
    let (acts, (k, h, _)) = trace.activation_maps(&model.spec);
    Ok(SaliencyVector {
        values: normalize_saliency(&cam(acts, &grads, k, h)),
        method: Method::LayerCam,
        target: c,
        normalized: true,
    })
}

/// Dispatches on the model family.
pub fn layercam(model: &TrainedModel, x: &MelSpectrogram, c: usize, cfg: &LayerCamConfig) -> Result<SaliencyVector> {
    match model.spec.family {
        Family::Tdnn => layercam_tdnn(model, x, c, cfg),
        Family::Cnn => layercam_cnn(model, x, c, cfg),
    }
}
