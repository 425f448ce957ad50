//! Audio input and log-mel feature extraction.

mod mel;
mod wav;

pub use mel::{
    log_mel_energies, mel_center_hz, mel_filterbank, mel_spectrogram, read_feature_dump, write_feature_dump,
    FeatureConfig, MelSpectrogram,
};
pub use wav::{encode_wav, load_wav, parse_wav, resample, write_wav, Waveform};
