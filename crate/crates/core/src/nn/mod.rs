//! From-scratch TDNN and CNN speaker classifiers.
//!
//! Both families share the same head:
//!
//! ```text
//! conv stack -> temporal statistics pooling -> dense(128) -> ReLU -> dense(N)
//! ```
//!
//! TDNN layers convolve over time with mel bins as input channels. CNN layers
//! treat the spectrogram as a one-channel image, and every conv is followed by
//! ReLU and a 2x2/2 max-pool. All convolutions use stride 1 and zero "same"
//! padding. The activation maps explained by LayerCAM are the post-ReLU output
//! of the last conv layer (before its pool, for CNNs).

mod checkpoint;
mod model;
mod ops;
mod params;
mod spec;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use model::{backward_to_layer, forward, logits_from_activations, stats_pool, ForwardTrace, Gradients, OcclusionSession, Score};
pub use params::{Affine, Parameters, TrainedModel};
pub use spec::{receptive_field, Arch, ConvLayer, Family, ModelSpec};
pub use train::{
    cross_entropy, loss_and_gradients, top1_accuracy, train, train_step, Adam, EpochLog, TrainingConfig,
    TrainingReport,
};
