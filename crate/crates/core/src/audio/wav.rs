use std::path::Path;

use crate::error::{Error, Result};
use crate::util;

/// Mono PCM signal with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform is empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("waveform contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let bytes = util::read(path.as_ref())?;
    parse_wav(&bytes)
}

/// Parses a RIFF/WAVE PCM16 container. Multi-channel input keeps channel 0.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if body + len > bytes.len() {
            return Err(Error::Format(format!(
                "chunk {:?} declares {} bytes but only {} remain",
                String::from_utf8_lossy(id),
                len,
                bytes.len() - body
            )));
        }
        let chunk = &bytes[body..body + len];
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let mut tag = u16::from_le_bytes([chunk[0], chunk[1]]);
                let channels = u16::from_le_bytes([chunk[2], chunk[3]]);
                let rate = u32::from_le_bytes(chunk[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([chunk[14], chunk[15]]);
                if tag == WAVE_FORMAT_EXTENSIBLE && len >= 26 {
                    tag = u16::from_le_bytes([chunk[24], chunk[25]]);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(chunk),
            _ => {}
        }
        // chunks are word aligned
        pos = body + len + (len & 1);
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if tag != WAVE_FORMAT_PCM || bits != 16 {
        return Err(Error::UnsupportedCodec(format!(
            "format tag {tag}, {bits} bits per sample; only PCM16 is supported"
        )));
    }
    if channels == 0 || rate == 0 {
        return Err(Error::Format("zero channels or sample rate".into()));
    }
    let stride = 2 * channels as usize;
    let samples: Vec<f32> = data
        .chunks_exact(stride)
        .map(|frame| i16::from_le_bytes([frame[0], frame[1]]) as f32 / 32768.0)
        .collect();
    if samples.is_empty() {
        return Err(Error::Format("data chunk holds no samples".into()));
    }
    Ok(Waveform {
        samples,
        sample_rate: rate,
    })
}

/// Encodes a mono PCM16 WAV; amplitudes are clipped to [-1, 1).
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let n = w.samples.len();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + 2 * n) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&((2 * n) as u32).to_le_bytes());
    for &s in &w.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    util::write_atomic(path.as_ref(), &encode_wav(w))
}

/// Linear-interpolation resampling to `target_rate`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let n_in = w.samples.len();
    let ratio = w.sample_rate as f64 / target_rate as f64;
    let n_out = ((n_in as f64) / ratio).round().max(1.0) as usize;
    let last = n_in - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = (pos - lo as f64).clamp(0.0, 1.0);
            let a = w.samples[lo] as f64;
            let b = w.samples[hi] as f64;
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16(samples: &[i16], rate: u32, channels: u16) -> Vec<u8> {
        let data_len = samples.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn one_second_of_silence() {
        let w = parse_wav(&pcm16(&vec![0; 16000], 16000, 1)).unwrap();
        assert_eq!(w.sample_rate, 16000);
        assert_eq!(w.samples.len(), 16000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm_scaling() {
        let w = parse_wav(&pcm16(&[16384, -32768], 8000, 1)).unwrap();
        assert_eq!(w.samples, vec![0.5, -1.0]);
    }

    #[test]
    fn stereo_keeps_channel_zero() {
        let w = parse_wav(&pcm16(&[100, -5, 200, -6], 8000, 2)).unwrap();
        assert_eq!(w.samples, vec![100.0 / 32768.0, 200.0 / 32768.0]);
    }

    #[test]
    fn truncated_data_chunk_is_format_error() {
        let mut bytes = pcm16(&[1, 2, 3, 4], 16000, 1);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(parse_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn float_wav_is_unsupported() {
        let mut bytes = pcm16(&[1, 2], 16000, 1);
        bytes[20] = 3; // IEEE float tag
        assert!(matches!(parse_wav(&bytes), Err(Error::UnsupportedCodec(_))));
    }

    #[test]
    fn garbage_is_format_error() {
        assert!(matches!(parse_wav(b"not a wav file"), Err(Error::Format(_))));
    }

    #[test]
    fn encode_roundtrip() {
        let w = Waveform::new(vec![0.0, 0.5, -0.25, -1.0], 16000).unwrap();
        assert_eq!(parse_wav(&encode_wav(&w)).unwrap(), w);
    }

    #[test]
    fn resample_identity_and_constant() {
        let w = Waveform::new(vec![0.1, 0.2, 0.3], 16000).unwrap();
        assert_eq!(resample(&w, 16000).unwrap(), w);
        let c = Waveform::new(vec![0.3; 4800], 48000).unwrap();
        let r = resample(&c, 16000).unwrap();
        assert_eq!(r.samples.len(), 1600);
        assert!(r.samples.iter().all(|&s| s == 0.3));
        let up = resample(&Waveform::new(vec![0.3; 800], 8000).unwrap(), 16000).unwrap();
        assert!(up.samples.iter().all(|&s| s == 0.3));
    }

    #[test]
    fn resample_preserves_duration() {
        for (n, from, to) in [(4801usize, 48000u32, 16000u32), (1000, 8000, 16000), (777, 22050, 16000)] {
            let w = Waveform::new(vec![0.0; n], from).unwrap();
            let r = resample(&w, to).unwrap();
            assert!((r.duration_s() - w.duration_s()).abs() <= 1.0 / to as f64);
        }
    }

    /// Naive DFT magnitude peak, independent of any FFT path.
    fn dominant_frequency(samples: &[f32], rate: u32) -> f64 {
        let n = samples.len();
        let mut best = (0usize, 0.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (t, &s) in samples.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += s as f64 * ph.cos();
                im += s as f64 * ph.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (k, mag);
            }
        }
        best.0 as f64 * rate as f64 / n as f64
    }

    #[test]
    fn upsampled_sine_keeps_its_frequency() {
        let samples: Vec<f32> = (0..800)
            .map(|t| (2.0 * std::f64::consts::PI * 1000.0 * t as f64 / 8000.0).sin() as f32)
            .collect();
        let w = Waveform::new(samples, 8000).unwrap();
        let r = resample(&w, 16000).unwrap();
        assert_eq!(r.samples.len(), 1600);
        assert!((dominant_frequency(&r.samples, 16000) - 1000.0).abs() < 1e-9);
    }
}
