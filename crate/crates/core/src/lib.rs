//! Phoneme attribution for deep speaker-identification models.
//!
//! The crate trains small TDNN and CNN speaker classifiers from scratch,
//! explains their decisions frame by frame with LayerCAM and time-aligned
//! occlusion (TAO), and folds the resulting saliency into per-phoneme
//! importance statistics.
//!
//! ```text
//! wav -> log-mel -> model -> saliency (LayerCAM | TAO) -> PID -> consistency report
//!                                       ^
//!                        phoneme boundaries (TextGrid | CSV)
//! ```
//!
//! Modules map onto pipeline stages:
//!
//! - [`audio`]: WAV I/O, resampling, log-mel features
//! - [`nn`]: TDNN/CNN forward, backprop, Adam training, checkpoints
//! - [`corpus`]: Audio-MNIST layout scanning, split, test utterances, synthetic corpus
//! - [`alignment`]: phoneme inventory, TextGrid/CSV parsing, receptive-field-pure frames
//! - [`explain`]: LayerCAM and TAO saliency
//! - [`analysis`]: PIDs, Spearman statistics, reports
//! - [`pipeline`]: config-driven orchestration used by the CLI

pub mod alignment;
pub mod analysis;
pub mod audio;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod nn;
pub mod pipeline;
pub(crate) mod util;

pub use error::{Error, Result};
