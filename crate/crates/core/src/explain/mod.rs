//! Frame-level saliency: LayerCAM on the last conv layer and time-aligned
//! occlusion (TAO) with a temporal Gaussian blur.

mod dump;
mod layercam;
mod tao;

pub use dump::{encode_saliency_csv, parse_saliency_csv, read_saliency_csv, write_saliency_csv, SaliencyRow};
pub use layercam::{layercam, layercam_cnn, layercam_map_cnn, layercam_tdnn, upsample_bilinear, LayerCamConfig, SaliencyMap2D};
pub use tao::{blur_window, tao, tao_with, CountingProbe, OcclusionProbe, TaoConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "layercam")]
    LayerCam,
    #[serde(rename = "tao")]
    Tao,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::LayerCam, Method::Tao];

    pub fn name(self) -> &'static str {
        match self {
            Method::LayerCam => "layercam",
            Method::Tao => "tao",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "layercam" => Ok(Method::LayerCam),
            "tao" => Ok(Method::Tao),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

/// One saliency value per input frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyVector {
    pub values: Vec<f64>,
    pub method: Method,
    pub target: usize,
    /// Whether min-max normalization was applied (to the 2-D map, for CNNs).
    pub normalized: bool,
}

impl SaliencyVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Min-max scaling to [0, 1]; a constant input maps to zeros.
pub fn normalize_saliency(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if v.is_empty() || !(hi > lo) {
        return vec![0.0; v.len()];
    }
    let span = hi - lo;
    v.iter().map(|x| (x - lo) / span).collect()
}
