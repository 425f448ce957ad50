//! End-to-end runs driven by one [`RunConfig`]: corpus, features, training,
//! explanation and analysis, with content-addressed caches under the output
//! directory so interrupted runs resume where they stopped.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{frames_for_phonemes, FrameAssignment, Inventory, LabelMap, PhoneClass, PhonemeAlignment};
use crate::analysis::report::{
    inventory_entries, GlobalPidEntry, MethodConsistencyEntry, MissingEntry, ModelSummary, Report, SpeakerCorrelationEntry,
};
use crate::analysis::{global_pid, method_consistency, model_consistency, rank_phonemes, speaker_correlations, utterance_pid, Pid, SpeakerOptions};
use crate::audio::{mel_spectrogram, read_feature_dump, write_feature_dump, FeatureConfig, MelSpectrogram};
use crate::corpus::{build_test_utterances, build_utterances, scan_corpus, split, synth_corpus, Manifest, SynthConfig};
use crate::error::{Error, Result};
use crate::explain::{layercam, tao, write_saliency_csv, LayerCamConfig, Method, SaliencyVector, TaoConfig};
use crate::nn::{load_checkpoint, receptive_field, save_checkpoint, top1_accuracy, train, Arch, ModelSpec, TrainedModel, TrainingConfig, TrainingReport};
use crate::util::{self, derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub n_speakers: usize,
    pub takes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectorySource {
    pub root: PathBuf,
    /// Where TextGrids live when they are not next to the WAVs.
    #[serde(default)]
    pub textgrid_dir: Option<PathBuf>,
    /// JSON map from aligner symbols to inventory base symbols.
    #[serde(default)]
    pub label_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Synth(SynthSource),
    Directory(DirectorySource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRun {
    pub arch: Arch,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_crop")]
    pub crop_frames: usize,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    16
}
fn default_crop() -> usize {
    200
}

impl ModelRun {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            lr: default_lr(),
            epochs: default_epochs(),
            batch: default_batch(),
            crop_frames: default_crop(),
        }
    }

    fn training(&self, root_seed: u64) -> TrainingConfig {
        TrainingConfig {
            arch: self.arch,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            seed: derive_seed(root_seed, &format!("train/{}", self.arch)),
            crop_frames: self.crop_frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub top_k: usize,
    pub max_between_pairs: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            top_k: 10,
            max_between_pairs: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub features: FeatureConfig,
    pub models: Vec<ModelRun>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub tao: TaoConfig,
    #[serde(default)]
    pub layercam: LayerCamConfig,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Worker threads; all cores when unset.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/desk")
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl RunConfig {
    /// Ten synthetic speakers with ten takes per digit, TDNN-1 and CNN-3, both methods.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            corpus: CorpusSource::Synth(SynthSource { n_speakers: 10, takes: 10 }),
            features: FeatureConfig::default(),
            models: vec![ModelRun::new(Arch::Tdnn1), ModelRun::new(Arch::Cnn3)],
            methods: default_methods(),
            tao: TaoConfig::default(),
            layercam: LayerCamConfig::default(),
            analysis: AnalysisOptions::default(),
            jobs: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let cfg: RunConfig = serde_json::from_str(&util::read_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("config lists no models".into()));
        }
        let mut archs: Vec<Arch> = self.models.iter().map(|m| m.arch).collect();
        archs.sort_by_key(|a| a.name());
        archs.dedup();
        if archs.len() != self.models.len() {
            return Err(Error::InvalidArgument("each architecture may appear only once".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("config lists no explanation methods".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be positive".into()));
        }
        for m in &self.models {
            if m.epochs == 0 || m.batch == 0 || !(m.lr > 0.0) {
                return Err(Error::InvalidArgument(format!("{}: epochs, batch and lr must be positive", m.arch)));
            }
        }
        match &self.corpus {
            CorpusSource::Synth(s) if s.n_speakers < 2 || s.takes < 2 || s.takes % 2 != 0 => Err(Error::InvalidArgument(
                "synthetic corpus needs at least 2 speakers and an even take count of at least 2".into(),
            )),
            CorpusSource::Directory(d) if !d.root.is_dir() => Err(Error::io(
                &d.root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory does not exist"),
            )),
            _ => Ok(()),
        }
    }

    /// Runs `f` on a thread pool sized by `jobs`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        let pool = b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }

    fn synth_config(&self, s: &SynthSource) -> SynthConfig {
        SynthConfig {
            n_speakers: s.n_speakers,
            takes: s.takes,
            seed: derive_seed(self.seed, "synth"),
            sample_rate: self.features.sample_rate,
        }
    }
}

/// Creates the synthetic corpus if the config asks for one; returns the corpus root.
pub fn stage_synth(cfg: &RunConfig) -> Result<PathBuf> {
    match &cfg.corpus {
        CorpusSource::Directory(d) => Ok(d.root.clone()),
        CorpusSource::Synth(s) => {
            let root = cfg.out.join("corpus");
            let sc = cfg.synth_config(s);
            let marker = root.join("synth.json");
            let current = util::read_string(&marker)
                .ok()
                .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
                .and_then(|v| serde_json::from_value::<SynthConfig>(v["config"].clone()).ok());
            if current.as_ref() == Some(&sc) {
                log::info!("synthetic corpus already present at {}", root.display());
            } else {
                log::info!("synthesizing {} speakers x {} takes into {}", s.n_speakers, s.takes, root.display());
                synth_corpus(&root, &sc)?;
            }
            Ok(root)
        }
    }
}

/// A featurized utterance.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub label: usize,
    pub features: MelSpectrogram,
    pub feature_key: String,
}

#[derive(Debug, Clone)]
pub struct TestItem {
    pub utterance: Utterance,
    pub alignment: PhonemeAlignment,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus_root: PathBuf,
    pub speakers: Vec<String>,
    pub train: Vec<Utterance>,
    pub test: Vec<TestItem>,
    pub manifest: Manifest,
}

fn featurize(cfg: &RunConfig, plan: &crate::corpus::UtterancePlan, label: usize) -> Result<(Utterance, crate::corpus::TestUtterance)> {
    let utt = plan.load(cfg.features.sample_rate)?;
    let bytes: Vec<u8> = utt.waveform.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    let key = sha256_hex(&[b"features", serde_json::to_string(&cfg.features)?.as_bytes(), &bytes]);
    let path = cfg.out.join("cache").join("features").join(format!("{key}.mel"));
    let features = match read_feature_dump(&path, &cfg.features) {
        Ok(m) => m,
        Err(_) => {
            let m = mel_spectrogram(&utt.waveform, &cfg.features)?;
            write_feature_dump(&path, &m)?;
            m
        }
    };
    Ok((
        Utterance {
            id: plan.id.clone(),
            speaker: plan.speaker.clone(),
            label,
            features,
            feature_key: key,
        },
        utt,
    ))
}

/// Scans and splits the corpus, writes the manifest, and featurizes both sides.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let root = stage_synth(cfg)?;
    let catalog = scan_corpus(&root)?;
    if catalog.is_empty() {
        return Err(Error::Construction(format!("no recordings under {}", root.display())));
    }
    let sp = split(&catalog, derive_seed(cfg.seed, "split"))?;
    let test_plans = build_test_utterances(&sp.test)?;
    let train_plans = build_utterances(&sp.train, "t")?;
    let manifest = Manifest::new(&root, &catalog, &sp, &test_plans);
    manifest.save(cfg.out.join("manifest.json"))?;
    let speakers = catalog.speakers();
    let label = |s: &str| speakers.iter().position(|x| x == s).expect("speaker in catalog");
    let (textgrid_dir, label_map) = match &cfg.corpus {
        CorpusSource::Directory(d) => (d.textgrid_dir.clone(), d.label_map.as_ref().map(LabelMap::load).transpose()?.unwrap_or_default()),
        CorpusSource::Synth(_) => (None, LabelMap::default()),
    };
    let inventory = Inventory::digits();
    log::info!("featurizing {} train and {} test utterances", train_plans.len(), test_plans.len());
    let train: Vec<Utterance> = train_plans
        .par_iter()
        .map(|p| featurize(cfg, p, label(&p.speaker)).map(|r| r.0))
        .collect::<Result<_>>()?;
    let test: Vec<TestItem> = test_plans
        .par_iter()
        .map(|p| {
            let (u, raw) = featurize(cfg, p, label(&p.speaker))?;
            let alignment = p.alignment(&raw, &inventory, textgrid_dir.as_deref(), &label_map)?;
            Ok(TestItem { utterance: u, alignment })
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        corpus_root: root,
        speakers,
        train,
        test,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelSidecar {
    key: String,
    training: TrainingReport,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub arch: Arch,
    pub model: TrainedModel,
    pub key: String,
    pub training: TrainingReport,
    pub top1: f64,
}

/// Trains (or reloads) every configured model and scores it on the test side.
pub fn stage_train(cfg: &RunConfig, prep: &Prepared) -> Result<Vec<TrainedRun>> {
    let data: Vec<(MelSpectrogram, usize)> = prep.train.iter().map(|u| (u.features.clone(), u.label)).collect();
    let test: Vec<(MelSpectrogram, usize)> = prep.test.iter().map(|t| (t.utterance.features.clone(), t.utterance.label)).collect();
    let data_keys: Vec<&[u8]> = prep.train.iter().flat_map(|u| [u.feature_key.as_bytes(), u.id.as_bytes()]).collect();
    let data_hash = sha256_hex(&data_keys);
    let mut runs = Vec::new();
    for m in &cfg.models {
        let spec = ModelSpec::from_arch(m.arch, cfg.features.n_mels, prep.speakers.len())?;
        let tc = m.training(cfg.seed);
        let key = sha256_hex(&[b"model", serde_json::to_string(&spec)?.as_bytes(), serde_json::to_string(&tc)?.as_bytes(), data_hash.as_bytes()]);
        let dir = cfg.out.join("models");
        let ckpt = dir.join(format!("{}.ckpt", m.arch));
        let side = dir.join(format!("{}.json", m.arch));
        let cached = util::read_string(&side)
            .ok()
            .and_then(|s| serde_json::from_str::<ModelSidecar>(&s).ok())
            .filter(|s| s.key == key)
            .and_then(|s| load_checkpoint(&ckpt).ok().map(|model| (model, s.training)));
        let (model, training) = match cached {
            Some(c) => {
                log::info!("{}: reusing checkpoint {}", m.arch, ckpt.display());
                c
            }
            None => {
                log::info!("{}: training on {} utterances", m.arch, data.len());
                let (model, training) = train(spec, &data, &tc)?;
                save_checkpoint(&ckpt, &model)?;
                let sidecar = ModelSidecar {
                    key: key.clone(),
                    training: training.clone(),
                };
                util::write_atomic(&side, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
                (model, training)
            }
        };
        let top1 = top1_accuracy(&model, &test)?;
        log::info!("{}: top-1 {:.4}", m.arch, top1);
        runs.push(TrainedRun {
            arch: m.arch,
            model,
            key,
            training,
            top1,
        });
    }
    Ok(runs)
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub arch: Arch,
    pub method: Method,
    /// One vector per test utterance, in `Prepared::test` order.
    pub saliency: Vec<SaliencyVector>,
}

fn encode_values(v: &SaliencyVector) -> Vec<u8> {
    v.values.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn decode_values(bytes: &[u8], n: usize) -> Option<Vec<f64>> {
    (bytes.len() == n * 8).then(|| bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Saliency for every model, method and test utterance, targeting the true speaker.
pub fn stage_explain(cfg: &RunConfig, prep: &Prepared, runs: &[TrainedRun]) -> Result<Vec<Explanation>> {
    let mut out = Vec::new();
    for run in runs {
        for &method in &cfg.methods {
            let method_cfg = match method {
                Method::Tao => serde_json::to_string(&cfg.tao)?,
                Method::LayerCam => serde_json::to_string(&cfg.layercam)?,
            };
            log::info!("{}: {} on {} utterances", run.arch, method, prep.test.len());
            let saliency: Vec<SaliencyVector> = prep
                .test
                .par_iter()
                .map(|t| {
                    let u = &t.utterance;
                    let key = sha256_hex(&[
                        b"saliency",
                        run.key.as_bytes(),
                        u.feature_key.as_bytes(),
                        method.name().as_bytes(),
                        method_cfg.as_bytes(),
                        &(u.label as u64).to_le_bytes(),
                    ]);
                    let path = cfg.out.join("cache").join("saliency").join(format!("{key}.f64"));
                    let (normalized, n) = (method == Method::LayerCam, u.features.n_frames);
                    if let Some(values) = util::read(&path).ok().and_then(|b| decode_values(&b, n)) {
                        return Ok(SaliencyVector {
                            values,
                            method,
                            target: u.label,
                            normalized,
                        });
                    }
                    let s = match method {
                        Method::Tao => tao(&run.model, &u.features, u.label, &cfg.tao)?,
                        Method::LayerCam => layercam(&run.model, &u.features, u.label, &cfg.layercam)?,
                    };
                    util::write_atomic(&path, &encode_values(&s))?;
                    Ok(s)
                })
                .collect::<Result<_>>()?;
            let blocks: Vec<(&str, Method, &str, &[f64])> = prep
                .test
                .iter()
                .zip(&saliency)
                .map(|(t, s)| (t.utterance.id.as_str(), method, t.utterance.speaker.as_str(), s.values.as_slice()))
                .collect();
            write_saliency_csv(cfg.out.join("saliency").join(format!("{}_{}.csv", run.arch, method)), blocks)?;
            out.push(Explanation {
                arch: run.arch,
                method,
                saliency,
            });
        }
    }
    Ok(out)
}

/// Odd window used for frame purity: the receptive field, rounded up when even.
pub fn purity_window(spec: &ModelSpec) -> usize {
    let rf = receptive_field(spec);
    rf | 1
}

fn class_mean(values: &[Option<f64>], inv: &Inventory, class: PhoneClass) -> Option<f64> {
    let v: Vec<f64> = values.iter().zip(&inv.phonemes).filter(|(_, p)| p.class == class).filter_map(|(v, _)| *v).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// PIDs and every consistency statistic.
pub fn stage_analyze(cfg: &RunConfig, prep: &Prepared, runs: &[TrainedRun], expl: &[Explanation]) -> Result<Report> {
    let inv = Inventory::digits();
    let mut report = Report {
        seed: cfg.seed,
        speakers: prep.speakers.len(),
        train_utterances: prep.train.len(),
        test_utterances: prep.test.len(),
        inventory: inventory_entries(&inv),
        models: Vec::new(),
        method_consistency: Vec::new(),
        global_pids: Vec::new(),
        model_consistency: None,
        speaker_correlations: Vec::new(),
        ranking: None,
        missing: Vec::new(),
    };
    let pair_opts = SpeakerOptions {
        max_between_pairs: cfg.analysis.max_between_pairs,
        seed: derive_seed(cfg.seed, "pairs"),
    };
    let mut combos: Vec<(String, Pid)> = Vec::new();
    for run in runs {
        let spec = &run.model.spec;
        let window = purity_window(spec);
        let assignments: Vec<FrameAssignment> = prep
            .test
            .iter()
            .map(|t| {
                let f = &t.utterance.features;
                frames_for_phonemes(&t.alignment, &inv, f.n_frames, f.frame_hop_s, f.frame_len_s, window)
            })
            .collect::<Result<_>>()?;
        report.missing.push(MissingEntry {
            model: spec.name(),
            utterances_missing: (0..inv.len()).map(|q| assignments.iter().filter(|a| a.is_missing(q)).count()).collect(),
        });
        report.models.push(ModelSummary {
            model: spec.name(),
            receptive_field: receptive_field(spec),
            purity_window: window,
            top1: run.top1,
            training_steps: run.training.steps,
            final_loss: run.training.epochs.last().map(|e| e.mean_loss),
        });
        let mut per_method: Vec<(Method, &Explanation, Vec<Pid>)> = Vec::new();
        for e in expl.iter().filter(|e| e.arch == run.arch) {
            let pids: Vec<Pid> = e.saliency.iter().zip(&assignments).map(|(s, a)| utterance_pid(s, a)).collect::<Result<_>>()?;
            let g = global_pid(&pids)?;
            report.global_pids.push(GlobalPidEntry {
                model: spec.name(),
                method: e.method,
                vowel_mean: class_mean(&g.values, &inv, PhoneClass::Vowel),
                fricative_mean: class_mean(&g.values, &inv, PhoneClass::Fricative),
                values: g.values.clone(),
                counts: g.counts.clone(),
            });
            let labelled: Vec<(String, Pid)> = prep.test.iter().map(|t| t.utterance.speaker.clone()).zip(pids.iter().cloned()).collect();
            report.speaker_correlations.push(SpeakerCorrelationEntry {
                model: spec.name(),
                method: e.method,
                stats: speaker_correlations(&labelled, &pair_opts)?,
            });
            combos.push((format!("{}({})", spec.name(), e.method), g));
            per_method.push((e.method, e, pids));
        }
        let cam = per_method.iter().find(|p| p.0 == Method::LayerCam);
        let occ = per_method.iter().find(|p| p.0 == Method::Tao);
        if let (Some(cam), Some(occ)) = (cam, occ) {
            let xa: Vec<&[f64]> = cam.1.saliency.iter().map(|s| s.values.as_slice()).collect();
            let xb: Vec<&[f64]> = occ.1.saliency.iter().map(|s| s.values.as_slice()).collect();
            report.method_consistency.push(MethodConsistencyEntry {
                model: spec.name(),
                stats: method_consistency(&xa, &xb, &cam.2, &occ.2)?,
            });
        }
    }
    if combos.len() >= 2 {
        report.model_consistency = Some(model_consistency(&combos)?);
    }
    if !combos.is_empty() {
        let k = combos.iter().map(|c| c.1.present()).min().unwrap_or(0).min(cfg.analysis.top_k);
        let refs: Vec<&Pid> = combos.iter().map(|c| &c.1).collect();
        report.ranking = Some(rank_phonemes(&refs, &inv, k)?);
    }
    Ok(report)
}

/// Every stage in order; writes the report files into `<out>/report`.
pub fn run_all(cfg: &RunConfig) -> Result<Report> {
    let prep = prepare(cfg)?;
    let runs = stage_train(cfg, &prep)?;
    let expl = stage_explain(cfg, &prep, &runs)?;
    let report = stage_analyze(cfg, &prep, &runs, &expl)?;
    report.write(&cfg.out.join("report"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = RunConfig::desk();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        let minimal: RunConfig = serde_json::from_str(r#"{"corpus":{"synth":{"n_speakers":3,"takes":2}},"models":[{"arch":"TDNN-1"}]}"#).unwrap();
        assert_eq!(minimal.methods, Method::ALL);
        assert_eq!(minimal.tao.window, 7);
        minimal.validate().unwrap();
        assert!(serde_json::from_str::<RunConfig>(r#"{"corpus":{"synth":{"n_speakers":3,"takes":2}},"models":[],"bogus":1}"#).is_err());
        let mut bad = minimal.clone();
        bad.models.push(ModelRun::new(Arch::Tdnn1));
        assert!(bad.validate().is_err());
        let mut bad = minimal;
        bad.corpus = CorpusSource::Directory(DirectorySource {
            root: "/nonexistent/corpus".into(),
            textgrid_dir: None,
            label_map: None,
        });
        assert!(matches!(bad.validate(), Err(Error::Io { .. })));
    }

    #[test]
    fn purity_windows_are_odd() {
        for (a, w) in [(Arch::Tdnn1, 7), (Arch::Tdnn2, 7), (Arch::Cnn3, 9), (Arch::Cnn4, 9)] {
            assert_eq!(purity_window(&ModelSpec::from_arch(a, 64, 10).unwrap()), w);
        }
    }
}
