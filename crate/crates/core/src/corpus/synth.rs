use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Catalog, Recording};
use crate::alignment::{write_boundary_csv, Inventory, PhoneClass, PhonemeAlignment, PhonemeSegment};
use crate::audio::{write_wav, Waveform};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub takes: u32,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 10,
            takes: 10,
            seed: 0,
            sample_rate: 16000,
        }
    }
}

/// Generator parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpeaker {
    pub id: String,
    pub f0_hz: f64,
    pub tilt_db_per_octave: f64,
    /// Centre of the one-octave band that carries the speaker's modulation.
    pub band_hz: f64,
    /// Modulation depth per inventory phoneme.
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub modulation_hz: f64,
    pub inventory: Vec<String>,
    pub speakers: Vec<SynthSpeaker>,
}

const MODULATION_HZ: f64 = 16.0;
const MIN_DURATION_S: f64 = 0.1;
/// The modulated band spans one octave around the speaker's centre.
const BAND_HALF_WIDTH: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
enum Template {
    Voiced {
        formants: [(f64, f64); 3],
        target: [(f64, f64); 3],
        lowpass_hz: f64,
        rms: f64,
    },
    Noise {
        lo: f64,
        hi: f64,
        voicing: f64,
        rms: f64,
    },
    Plosive {
        lo: f64,
        hi: f64,
    },
}

struct Phone {
    template: Template,
    duration_s: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn templates(inv: &Inventory, seed: u64) -> Vec<Phone> {
    let mut by_base: std::collections::HashMap<String, Phone> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(inv.len());
    for p in &inv.phonemes {
        let base = p.base().to_string();
        if !by_base.contains_key(&base) {
            let mut r = ChaCha8Rng::seed_from_u64(util::derive_seed(seed, &format!("template/{base}")));
            let vowel_formants = |r: &mut ChaCha8Rng| {
                [
                    (uniform(r, 300.0, 850.0), 80.0),
                    (uniform(r, 900.0, 2400.0), 120.0),
                    (uniform(r, 2400.0, 3300.0), 180.0),
                ]
            };
            let (template, dur) = match p.class {
                PhoneClass::Vowel => {
                    let f = vowel_formants(&mut r);
                    (
                        Template::Voiced {
                            formants: f,
                            target: f,
                            lowpass_hz: 8000.0,
                            rms: 0.2,
                        },
                        uniform(&mut r, 0.15, 0.2),
                    )
                }
                PhoneClass::Approximant => (
                    Template::Voiced {
                        formants: vowel_formants(&mut r),
                        target: vowel_formants(&mut r),
                        lowpass_hz: 8000.0,
                        rms: 0.15,
                    },
                    uniform(&mut r, 0.11, 0.13),
                ),
                PhoneClass::Nasal => (
                    Template::Voiced {
                        formants: [(250.0, 100.0), (uniform(&mut r, 1000.0, 2200.0), 200.0), (2700.0, 250.0)],
                        target: [(250.0, 100.0), (uniform(&mut r, 1000.0, 2200.0), 200.0), (2700.0, 250.0)],
                        lowpass_hz: 500.0,
                        rms: 0.1,
                    },
                    uniform(&mut r, 0.11, 0.13),
                ),
                PhoneClass::Fricative => {
                    let lo = uniform(&mut r, 1200.0, 4000.0);
                    let voiced = matches!(base.as_str(), "z" | "v");
                    (
                        Template::Noise {
                            lo,
                            hi: (lo * uniform(&mut r, 1.6, 2.5)).min(7800.0),
                            voicing: if voiced { 0.3 } else { 0.0 },
                            rms: 0.06,
                        },
                        uniform(&mut r, 0.11, 0.14),
                    )
                }
                PhoneClass::Plosive => {
                    let lo = uniform(&mut r, 1000.0, 3000.0);
                    (Template::Plosive { lo, hi: (lo * 2.5).min(7800.0) }, uniform(&mut r, 0.1, 0.12))
                }
            };
            by_base.insert(base.clone(), Phone { template, duration_s: dur });
        }
        let ph = &by_base[&base];
        out.push(Phone {
            template: ph.template.clone(),
            duration_s: ph.duration_s,
        });
    }
    out
}

fn speakers(inv: &Inventory, cfg: &SynthConfig) -> Vec<SynthSpeaker> {
    let n = cfg.n_speakers;
    let mut r = ChaCha8Rng::seed_from_u64(util::derive_seed(cfg.seed, "bands"));
    let mut bands: Vec<f64> = (0..n).map(|i| 400.0 * (15.0f64).powf((i as f64 + 0.5) / n as f64)).collect();
    rand::seq::SliceRandom::shuffle(bands.as_mut_slice(), &mut r);
    (0..n)
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(util::derive_seed(cfg.seed, &format!("speaker/{s}")));
            let f0_hz = 120.0 * uniform(&mut r, 0.97, 1.03);
            let tilt = uniform(&mut r, -2.0, 2.0);
            let depth = inv
                .phonemes
                .iter()
                .map(|p| match p.class {
                    PhoneClass::Vowel => uniform(&mut r, 0.8, 2.0),
                    _ => uniform(&mut r, 0.0, 0.6),
                })
                .collect();
            SynthSpeaker {
                id: format!("{:02}", s + 1),
                f0_hz,
                tilt_db_per_octave: tilt,
                band_hz: bands[s],
                depth,
            }
        })
        .collect()
}

fn fft_filter(x: &[f64], sr: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sr / n as f64;
        *c *= gain(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn set_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

fn tilt_gain(f: f64, tilt_db: f64) -> f64 {
    10f64.powf(tilt_db * (f.max(50.0) / 1000.0).log2() / 20.0)
}

fn envelope(f: f64, formants: &[(f64, f64); 3]) -> f64 {
    const GAINS: [f64; 3] = [1.0, 0.6, 0.3];
    0.01 + formants
        .iter()
        .zip(GAINS)
        .map(|(&(c, b), g)| g / (1.0 + ((f - c) / b).powi(2)))
        .sum::<f64>()
}

fn harmonics(n: usize, sr: f64, f0: f64, from: &[(f64, f64); 3], to: &[(f64, f64); 3], lowpass: f64, tilt: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let kmax = (7800.0 / (f0 * 1.04)).floor() as usize;
    let phases: Vec<f64> = (0..kmax).map(|_| uniform(r, 0.0, 2.0 * PI)).collect();
    let mut out = vec![0.0; n];
    let mut phi = 0.0;
    const BLOCK: usize = 80;
    let mut amps = vec![0.0; kmax];
    for (i, o) in out.iter_mut().enumerate() {
        let frac = i as f64 / n as f64;
        let f0_t = f0 * (1.03 - 0.06 * frac);
        if i % BLOCK == 0 {
            let mut fm = [(0.0, 0.0); 3];
            for j in 0..3 {
                fm[j] = (from[j].0 + (to[j].0 - from[j].0) * frac, from[j].1);
            }
            for (k, a) in amps.iter_mut().enumerate() {
                let f = (k + 1) as f64 * f0_t;
                let lp = 1.0 / (1.0 + (f / lowpass).powi(4));
                *a = envelope(f, &fm) * tilt_gain(f, tilt) * lp / ((k + 1) as f64).sqrt();
            }
        }
        phi += 2.0 * PI * f0_t / sr;
        *o = amps.iter().zip(&phases).enumerate().map(|(k, (a, p))| a * ((k + 1) as f64 * phi + p).sin()).sum();
    }
    out
}

fn noise(n: usize, sr: f64, lo: f64, hi: f64, tilt: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| uniform(r, -1.0, 1.0)).collect();
    fft_filter(&white, sr, |f| {
        let edge = |x: f64| 1.0 / (1.0 + x.powi(8));
        edge(lo / f.max(1.0)) * edge(f / hi) * tilt_gain(f, tilt)
    })
}

fn render_phone(ph: &Phone, n: usize, sr: f64, spk: &SynthSpeaker, f0: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let tilt = spk.tilt_db_per_octave;
    match &ph.template {
        Template::Voiced {
            formants,
            target,
            lowpass_hz,
            rms,
        } => {
            let mut x = harmonics(n, sr, f0, formants, target, *lowpass_hz, tilt, r);
            set_rms(&mut x, *rms);
            x
        }
        Template::Noise { lo, hi, voicing, rms } => {
            let mut x = noise(n, sr, *lo, *hi, tilt, r);
            set_rms(&mut x, *rms);
            if *voicing > 0.0 {
                let f = [(200.0, 100.0), (1000.0, 200.0), (2500.0, 300.0)];
                let mut v = harmonics(n, sr, f0, &f, &f, 600.0, tilt, r);
                set_rms(&mut v, rms * voicing);
                x.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
            x
        }
        Template::Plosive { lo, hi } => {
            let closure = (n as f64 * 0.4) as usize;
            let burst = ((0.015 * sr) as usize).min(n - closure);
            let mut x = vec![0.0; n];
            let mut b = noise(n - closure, sr, 300.0, 7800.0, tilt, r);
            set_rms(&mut b[..burst], 0.15);
            let mut a = noise(n - closure, sr, *lo, *hi, tilt, r);
            set_rms(&mut a, 0.05);
            for i in 0..n - closure {
                let decay = (-(i as f64) / (0.03 * sr)).exp();
                x[closure + i] = if i < burst { b[i] } else { a[i] * decay };
            }
            x
        }
    }
}

struct Rendered {
    waveform: Waveform,
    alignment: PhonemeAlignment,
}

fn render_recording(inv: &Inventory, phones: &[Phone], spk: &SynthSpeaker, digit: u8, take: u32, cfg: &SynthConfig) -> Result<Rendered> {
    let sr = cfg.sample_rate as f64;
    let label = format!("take/{}/{digit}/{take}", spk.id);
    let mut r = ChaCha8Rng::seed_from_u64(util::derive_seed(cfg.seed, &label));
    let f0 = spk.f0_hz * uniform(&mut r, 0.99, 1.01);
    let idx = inv.digit_phonemes(digit);
    let mut samples: Vec<f64> = Vec::new();
    let mut bounds = Vec::with_capacity(idx.len());
    for &q in &idx {
        let dur = (phones[q].duration_s * uniform(&mut r, 0.92, 1.08)).max(MIN_DURATION_S);
        let n = (dur * sr).round() as usize;
        let start = samples.len();
        let mut x = render_phone(&phones[q], n, sr, spk, f0, &mut r);
        for v in x.iter_mut() {
            *v += 0.001 * uniform(&mut r, -1.732, 1.732);
        }
        let (lo, hi) = (spk.band_hz * BAND_HALF_WIDTH.recip(), spk.band_hz * BAND_HALF_WIDTH);
        let band = fft_filter(&x, sr, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 });
        let depth = spk.depth[q] * uniform(&mut r, 0.85, 1.15);
        let phase = uniform(&mut r, 0.0, 2.0 * PI);
        for (i, (v, b)) in x.iter_mut().zip(&band).enumerate() {
            let g = (depth * (2.0 * PI * MODULATION_HZ * i as f64 / sr + phase).sin()).exp();
            *v += (g - 1.0) * b;
        }
        samples.extend_from_slice(&x);
        bounds.push((q, start, samples.len()));
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.7 / peak } else { 1.0 };
    let waveform = Waveform::new(samples.iter().map(|v| (v * scale) as f32).collect(), cfg.sample_rate)?;
    let segments = bounds
        .iter()
        .map(|&(q, s, e)| PhonemeSegment {
            label: inv.phonemes[q].symbol.clone(),
            start_s: s as f64 / sr,
            end_s: e as f64 / sr,
        })
        .collect();
    let id = format!("{digit}_{}_{take}", spk.id);
    let alignment = PhonemeAlignment::new(id, segments, waveform.duration_s(), inv)?;
    Ok(Rendered { waveform, alignment })
}

/// Writes a synthetic corpus in Audio-MNIST layout under `root`, with a
/// boundary CSV next to every WAV and the generator parameters in
/// `synth.json`. Output depends only on `cfg`.
///
/// Phoneme templates are shared by all speakers. A speaker differs by
/// pitch, spectral tilt, and a 16 Hz log-gain modulation `exp(d sin wt)`
/// of one octave band whose depth `d` depends on the phoneme; vowels carry
/// the deepest modulation.
pub fn synth_corpus(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<(Catalog, SynthTruth)> {
    let root = root.as_ref();
    if cfg.n_speakers < 2 || cfg.n_speakers > 99 {
        return Err(Error::InvalidArgument(format!("n_speakers must be in 2..=99, got {}", cfg.n_speakers)));
    }
    if cfg.takes == 0 {
        return Err(Error::InvalidArgument("takes must be positive".into()));
    }
    if cfg.sample_rate < 16000 {
        return Err(Error::InvalidArgument(format!("sample rate must be at least 16000, got {}", cfg.sample_rate)));
    }
    let inv = Inventory::digits();
    let phones = templates(&inv, cfg.seed);
    let spks = speakers(&inv, cfg);
    let jobs: Vec<(usize, u8, u32)> = (0..spks.len())
        .flat_map(|s| (0..10u8).flat_map(move |d| (0..cfg.takes).map(move |k| (s, d, k))))
        .collect();
    let recordings: Vec<Recording> = jobs
        .par_iter()
        .map(|&(s, d, k)| -> Result<Recording> {
            let spk = &spks[s];
            let r = render_recording(&inv, &phones, spk, d, k, cfg)?;
            let path: PathBuf = root.join(&spk.id).join(format!("{d}_{}_{k}.wav", spk.id));
            write_wav(&path, &r.waveform)?;
            write_boundary_csv(path.with_extension("csv"), std::slice::from_ref(&r.alignment))?;
            Ok(Recording {
                speaker: spk.id.clone(),
                digit: d,
                take: k,
                path,
            })
        })
        .collect::<Result<_>>()?;
    let truth = SynthTruth {
        config: cfg.clone(),
        modulation_hz: MODULATION_HZ,
        inventory: inv.symbols().map(String::from).collect(),
        speakers: spks,
    };
    util::write_atomic(&root.join("synth.json"), serde_json::to_string_pretty(&truth)?.as_bytes())?;
    Ok((Catalog::new(recordings), truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::read_boundary_csv;
    use crate::audio::load_wav;
    use crate::corpus::scan_corpus;

    fn small() -> SynthConfig {
        SynthConfig {
            n_speakers: 2,
            takes: 2,
            seed: 3,
            sample_rate: 16000,
        }
    }

    #[test]
    fn deterministic_and_scannable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (cat, truth) = synth_corpus(a.path(), &small()).unwrap();
        synth_corpus(b.path(), &small()).unwrap();
        assert_eq!(cat.len(), 40);
        assert_eq!(truth.speakers.len(), 2);
        for r in &cat.recordings {
            let rel = r.path.strip_prefix(a.path()).unwrap();
            for ext in ["wav", "csv"] {
                let x = std::fs::read(r.path.with_extension(ext)).unwrap();
                let y = std::fs::read(b.path().join(rel).with_extension(ext)).unwrap();
                assert!(x == y, "{} differs", rel.display());
            }
        }
        let scanned = scan_corpus(a.path()).unwrap();
        assert_eq!(scanned.recordings, cat.recordings);
        assert!(scanned.skipped.is_empty());
    }

    #[test]
    fn boundaries_partition_each_recording() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = synth_corpus(dir.path(), &small()).unwrap();
        let inv = Inventory::digits();
        for r in &cat.recordings {
            let w = load_wav(&r.path).unwrap();
            let a = read_boundary_csv(r.path.with_extension("csv"), &inv).unwrap();
            let want: Vec<&str> = inv.digit_phonemes(r.digit).iter().map(|&q| inv.phonemes[q].symbol.as_str()).collect();
            assert_eq!(a.segments.iter().map(|s| s.label.as_str()).collect::<Vec<_>>(), want);
            assert_eq!(a.segments[0].start_s, 0.0);
            for p in a.segments.windows(2) {
                assert_eq!(p[0].end_s, p[1].start_s);
            }
            assert!((a.segments.last().unwrap().end_s - w.duration_s()).abs() < 1e-12);
            assert!(a.segments.iter().all(|s| s.end_s - s.start_s >= MIN_DURATION_S - 1e-9));
        }
    }

    #[test]
    fn rejects_single_speaker() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { n_speakers: 1, ..small() };
        assert!(synth_corpus(dir.path(), &cfg).is_err());
    }
}
