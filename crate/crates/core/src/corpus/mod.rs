//! Audio-MNIST style corpora: scanning, the per-cell split, digit
//! concatenation into utterances, and a synthetic generator.

mod synth;

pub use synth::{synth_corpus, SynthConfig, SynthSpeaker, SynthTruth};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{Inventory, LabelMap, PhonemeAlignment};
use crate::audio::{load_wav, resample, Waveform};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Recording {
    pub speaker: String,
    pub digit: u8,
    pub take: u32,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Recordings sorted by speaker, digit and take.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub recordings: Vec<Recording>,
    pub skipped: Vec<SkippedFile>,
}

impl Catalog {
    pub fn new(mut recordings: Vec<Recording>) -> Self {
        recordings.sort();
        Self {
            recordings,
            skipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.recordings.iter().map(|r| r.speaker.clone()).collect();
        s.dedup();
        s
    }

    /// Recordings per (speaker, digit).
    pub fn cells(&self) -> BTreeMap<(String, u8), Vec<&Recording>> {
        let mut m: BTreeMap<(String, u8), Vec<&Recording>> = BTreeMap::new();
        for r in &self.recordings {
            m.entry((r.speaker.clone(), r.digit)).or_default().push(r);
        }
        m
    }
}

fn parse_name(stem: &str) -> Option<(u8, String, u32)> {
    let mut it = stem.split('_');
    let d: u8 = it.next()?.parse().ok()?;
    let spk = it.next()?.to_string();
    let take: u32 = it.next()?.parse().ok()?;
    (it.next().is_none() && d <= 9 && !spk.is_empty()).then_some((d, spk, take))
}

/// Scans `root/<speaker>/<digit>_<speaker>_<take>.wav`. Files that do not
/// fit the naming scheme are reported, not fatal; non-WAV files are ignored.
pub fn scan_corpus(root: impl AsRef<Path>) -> Result<Catalog> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut recordings = Vec::new();
    let mut skipped = Vec::new();
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let dir_name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        for path in files {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match parse_name(&stem) {
                Some((digit, speaker, take)) if speaker == dir_name => recordings.push(Recording {
                    speaker,
                    digit,
                    take,
                    path,
                }),
                Some((_, speaker, _)) => skipped.push(SkippedFile {
                    path,
                    reason: format!("speaker {speaker:?} does not match directory {dir_name:?}"),
                }),
                None => skipped.push(SkippedFile {
                    path,
                    reason: "file name is not <digit>_<speaker>_<take>.wav".into(),
                }),
            }
        }
    }
    if recordings.is_empty() {
        log::warn!("no recordings found under {}", root.display());
    }
    for s in &skipped {
        log::warn!("skipping {}: {}", s.path.display(), s.reason);
    }
    let mut cat = Catalog::new(recordings);
    cat.skipped = skipped;
    Ok(cat)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Recording>,
    pub test: Vec<Recording>,
}

/// Halves every (speaker, digit) cell at random, seeded per cell. Both sides
/// are sorted like the catalog.
pub fn split(catalog: &Catalog, seed: u64) -> Result<Split> {
    let mut train = Vec::with_capacity(catalog.len() / 2);
    let mut test = Vec::with_capacity(catalog.len() / 2);
    for ((spk, d), recs) in catalog.cells() {
        if recs.len() % 2 != 0 {
            return Err(Error::Split(format!(
                "speaker {spk} digit {d} has {} takes; an even count is required",
                recs.len()
            )));
        }
        let mut order: Vec<&Recording> = recs;
        let mut rng = ChaCha8Rng::seed_from_u64(util::derive_seed(seed, &format!("split/{spk}/{d}")));
        order.shuffle(&mut rng);
        let half = order.len() / 2;
        train.extend(order[..half].iter().map(|r| (*r).clone()));
        test.extend(order[half..].iter().map(|r| (*r).clone()));
    }
    train.sort();
    test.sort();
    Ok(Split { train, test })
}

/// Ten recordings of one speaker, digits 0..9 in order, joined without gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtterancePlan {
    pub id: String,
    pub speaker: String,
    pub parts: Vec<Recording>,
}

/// Pairs take i of digit d with take i of every other digit (takes in
/// ascending order), giving one utterance per take index and speaker.
/// Ids are `<speaker>_<tag><i>`.
pub fn build_utterances(set: &[Recording], tag: &str) -> Result<Vec<UtterancePlan>> {
    let mut by_spk: BTreeMap<&str, [Vec<&Recording>; 10]> = BTreeMap::new();
    for r in set {
        by_spk.entry(&r.speaker).or_default()[r.digit as usize].push(r);
    }
    let mut out = Vec::new();
    for (spk, mut digits) in by_spk {
        for (d, recs) in digits.iter_mut().enumerate() {
            if recs.is_empty() {
                return Err(Error::Construction(format!("speaker {spk} has no recording of digit {d}")));
            }
            recs.sort();
        }
        let n = digits[0].len();
        if let Some(d) = (0..10).find(|&d| digits[d].len() != n) {
            return Err(Error::Construction(format!(
                "speaker {spk} has {} takes of digit {d} but {n} of digit 0",
                digits[d].len()
            )));
        }
        for i in 0..n {
            out.push(UtterancePlan {
                id: format!("{spk}_{tag}{i:02}"),
                speaker: spk.to_string(),
                parts: digits.iter().map(|recs| recs[i].clone()).collect(),
            });
        }
    }
    Ok(out)
}

/// Test-side utterances, ids `<speaker>_u<i>`.
pub fn build_test_utterances(test: &[Recording]) -> Result<Vec<UtterancePlan>> {
    build_utterances(test, "u")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestUtterance {
    pub id: String,
    pub speaker: String,
    pub waveform: Waveform,
    /// Start sample of each digit; the first is 0.
    pub offsets: Vec<usize>,
}

impl TestUtterance {
    pub fn offsets_s(&self) -> Vec<f64> {
        self.offsets.iter().map(|&o| o as f64 / self.waveform.sample_rate as f64).collect()
    }
}

impl UtterancePlan {
    /// Loads, resamples to `sample_rate` and concatenates the parts.
    pub fn load(&self, sample_rate: u32) -> Result<TestUtterance> {
        let mut samples = Vec::new();
        let mut offsets = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            let w = resample(&load_wav(&p.path)?, sample_rate)?;
            offsets.push(samples.len());
            samples.extend_from_slice(&w.samples);
        }
        Ok(TestUtterance {
            id: self.id.clone(),
            speaker: self.speaker.clone(),
            waveform: Waveform::new(samples, sample_rate)?,
            offsets,
        })
    }

    /// Joins the per-recording boundary files (a sibling `.csv`, or a
    /// `.TextGrid` found next to the WAV or under `textgrid_dir`) and
    /// renumbers repeated phonemes over the whole utterance.
    pub fn alignment(&self, utt: &TestUtterance, inventory: &Inventory, textgrid_dir: Option<&Path>, label_map: &LabelMap) -> Result<PhonemeAlignment> {
        let offsets = utt.offsets_s();
        let mut parts = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            parts.push(load_part_alignment(p, inventory, textgrid_dir, label_map)?);
        }
        let joined: Vec<(&PhonemeAlignment, f64)> = parts.iter().zip(offsets).collect();
        let mut a = PhonemeAlignment::concatenate(&self.id, &joined, utt.waveform.duration_s());
        a.renumber_variants();
        a.validate(inventory)?;
        Ok(a)
    }
}

fn load_part_alignment(r: &Recording, inventory: &Inventory, textgrid_dir: Option<&Path>, label_map: &LabelMap) -> Result<PhonemeAlignment> {
    let csv = r.path.with_extension("csv");
    if csv.exists() {
        return crate::alignment::read_boundary_csv(&csv, inventory);
    }
    let stem = r.path.file_stem().map(|s| s.to_owned()).unwrap_or_default();
    let mut candidates = vec![r.path.with_extension("TextGrid")];
    if let Some(dir) = textgrid_dir {
        candidates.push(dir.join(&r.speaker).join(&stem).with_extension("TextGrid"));
        candidates.push(dir.join(&stem).with_extension("TextGrid"));
    }
    let opts = crate::alignment::TextGridOptions {
        label_map: label_map.clone(),
        ..Default::default()
    };
    for c in &candidates {
        if c.exists() {
            return crate::alignment::parse_textgrid(c, inventory, &opts);
        }
    }
    Err(Error::Io {
        path: csv,
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no boundary CSV or TextGrid for recording"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub speaker: String,
    pub digit: u8,
    pub take: u32,
    pub path: PathBuf,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub root: PathBuf,
    pub recordings: Vec<ManifestEntry>,
    pub test_utterances: Vec<UtterancePlan>,
    pub skipped: Vec<SkippedFile>,
}

impl Manifest {
    pub fn new(root: &Path, catalog: &Catalog, split: &Split, test_utterances: &[UtterancePlan]) -> Self {
        let mut recordings: Vec<ManifestEntry> = split
            .train
            .iter()
            .map(|r| (r, "train"))
            .chain(split.test.iter().map(|r| (r, "test")))
            .map(|(r, s)| ManifestEntry {
                speaker: r.speaker.clone(),
                digit: r.digit,
                take: r.take,
                path: r.path.clone(),
                split: s.into(),
            })
            .collect();
        recordings.sort_by(|a, b| (&a.speaker, a.digit, a.take).cmp(&(&b.speaker, b.digit, b.take)));
        Self {
            root: root.to_path_buf(),
            recordings,
            test_utterances: test_utterances.to_vec(),
            skipped: catalog.skipped.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_atomic(path.as_ref(), serde_json::to_string_pretty(self)?.as_bytes())
    }
}
