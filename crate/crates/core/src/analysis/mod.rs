//! Phoneme importance distributions (PIDs) and the rank statistics built on them.

mod consistency;
mod pid;
mod ranking;
pub mod report;
mod spearman;

pub use consistency::{method_consistency, model_consistency, speaker_correlations, ConsistencyMatrix, MethodConsistency, SpeakerCorrelation, SpeakerOptions};
pub use pid::{global_pid, utterance_pid, Pid, Scope};
pub use ranking::{rank_phonemes, PidRanking, Ranking};
pub use spearman::{average_ranks, spearman, spearman_dense};
