use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "TDNN-1")]
    Tdnn1,
    #[serde(rename = "TDNN-2")]
    Tdnn2,
    #[serde(rename = "CNN-3")]
    Cnn3,
    #[serde(rename = "CNN-4")]
    Cnn4,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Tdnn1, Arch::Tdnn2, Arch::Cnn3, Arch::Cnn4];

    pub fn family(self) -> Family {
        match self {
            Arch::Tdnn1 | Arch::Tdnn2 => Family::Tdnn,
            Arch::Cnn3 | Arch::Cnn4 => Family::Cnn,
        }
    }

    /// Conv stack of the four reference architectures.
    pub fn conv_layers(self) -> Vec<ConvLayer> {
        let l = |kernel, channels| ConvLayer { kernel, channels };
        match self {
            Arch::Tdnn1 => vec![l(5, 512), l(3, 512)],
            Arch::Tdnn2 => vec![l(5, 512), l(3, 1024)],
            Arch::Cnn3 => vec![l(3, 32), l(3, 64)],
            Arch::Cnn4 => vec![l(3, 64), l(3, 64)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Tdnn1 => "TDNN-1",
            Arch::Tdnn2 => "TDNN-2",
            Arch::Cnn3 => "CNN-3",
            Arch::Cnn4 => "CNN-4",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tdnn,
    Cnn,
}

/// One convolution: odd kernel (time extent for TDNN, square for CNN) and output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `None` for scaled-down test networks.
    pub arch: Option<Arch>,
    pub family: Family,
    pub convs: Vec<ConvLayer>,
    pub n_mels: usize,
    pub embed_dim: usize,
    pub n_speakers: usize,
}

pub const EMBED_DIM: usize = 128;

impl ModelSpec {
    pub fn from_arch(arch: Arch, n_mels: usize, n_speakers: usize) -> Result<Self> {
        let spec = Self {
            arch: Some(arch),
            family: arch.family(),
            convs: arch.conv_layers(),
            n_mels,
            embed_dim: EMBED_DIM,
            n_speakers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn custom(
        family: Family,
        convs: Vec<ConvLayer>,
        n_mels: usize,
        embed_dim: usize,
        n_speakers: usize,
    ) -> Result<Self> {
        let spec = Self {
            arch: None,
            family,
            convs,
            n_mels,
            embed_dim,
            n_speakers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> String {
        match self.arch {
            Some(a) => a.name().to_string(),
            None => format!("custom-{:?}", self.family).to_lowercase(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.convs.is_empty() {
            return bad("at least one conv layer is required".into());
        }
        if let Some(a) = self.arch {
            if a.family() != self.family || a.conv_layers() != self.convs || self.embed_dim != EMBED_DIM {
                return bad(format!("layer layout does not match {a}"));
            }
        }
        if let Some(c) = self.convs.iter().find(|c| c.kernel % 2 == 0 || c.kernel == 0 || c.channels == 0) {
            return bad(format!("conv layers need odd kernels and non-zero channels, got {c:?}"));
        }
        if self.n_mels == 0 || self.embed_dim == 0 || self.n_speakers == 0 {
            return bad("n_mels, embed_dim and n_speakers must be positive".into());
        }
        if self.family == Family::Cnn && self.n_mels >> self.convs.len() == 0 {
            return bad(format!("{} mel bins cannot survive {} max-pools", self.n_mels, self.convs.len()));
        }
        Ok(())
    }

    pub(crate) fn conv_in_channels(&self, l: usize) -> usize {
        match (self.family, l) {
            (Family::Tdnn, 0) => self.n_mels,
            (Family::Cnn, 0) => 1,
            _ => self.convs[l - 1].channels,
        }
    }

    pub(crate) fn taps(&self, l: usize) -> usize {
        let k = self.convs[l].kernel;
        match self.family {
            Family::Tdnn => k,
            Family::Cnn => k * k,
        }
    }

    /// Length of the pooled statistics vector.
    pub fn pooled_dim(&self) -> usize {
        let last = self.convs.last().expect("validated").channels;
        match self.family {
            Family::Tdnn => 2 * last,
            Family::Cnn => 2 * last * (self.n_mels >> self.convs.len()),
        }
    }

    /// Shortest input (in frames) the network accepts.
    pub fn min_frames(&self) -> usize {
        let rf = receptive_field(self);
        match self.family {
            Family::Tdnn => rf,
            Family::Cnn => rf.max(1 << self.convs.len()),
        }
    }

    /// Names and shapes of all parameter tensors in canonical order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (l, c) in self.convs.iter().enumerate() {
            let cin = self.conv_in_channels(l);
            let shape = match self.family {
                Family::Tdnn => vec![c.kernel, c.channels, cin],
                Family::Cnn => vec![c.kernel, c.kernel, c.channels, cin],
            };
            out.push((format!("conv{l}.weight"), shape));
            out.push((format!("conv{l}.bias"), vec![c.channels]));
        }
        out.push(("embed.weight".into(), vec![self.embed_dim, self.pooled_dim()]));
        out.push(("embed.bias".into(), vec![self.embed_dim]));
        out.push(("classifier.weight".into(), vec![self.n_speakers, self.embed_dim]));
        out.push(("classifier.bias".into(), vec![self.n_speakers]));
        out
    }
}

/// Time-axis receptive field, in input frames, of one unit of the last conv layer.
pub fn receptive_field(spec: &ModelSpec) -> usize {
    let mut rf = 1;
    let mut jump = 1;
    let n = spec.convs.len();
    for (l, c) in spec.convs.iter().enumerate() {
        rf += (c.kernel - 1) * jump;
        if spec.family == Family::Cnn && l + 1 < n {
            // 2x2 stride-2 pool between convs
            rf += jump;
            jump *= 2;
        }
    }
    rf
}
