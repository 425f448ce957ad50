use serde::{Deserialize, Serialize};

use super::{Inventory, PhonemeAlignment};
use crate::error::{Error, Result};

/// Pure frames per inventory phoneme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAssignment {
    pub frames: Vec<Vec<usize>>,
    /// Whether the phoneme occurs in the alignment at all.
    pub present: Vec<bool>,
}

impl FrameAssignment {
    pub fn count(&self, q: usize) -> usize {
        self.frames[q].len()
    }

    pub fn is_missing(&self, q: usize) -> bool {
        self.frames[q].is_empty()
    }

    /// Phonemes that occur but whose segments are too short to hold a pure frame.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|&q| self.present[q] && self.frames[q].is_empty()).collect()
    }
}

/// Centre of frame `t` in seconds.
pub fn frame_center_s(t: usize, hop_s: f64, frame_len_s: f64) -> f64 {
    t as f64 * hop_s + frame_len_s / 2.0
}

/// Frames whose whole receptive field of `rf` frames, centred on them, has
/// centres inside one segment `[start, end)` of the phoneme.
pub fn frames_for_phonemes(
    alignment: &PhonemeAlignment,
    inventory: &Inventory,
    n_frames: usize,
    hop_s: f64,
    frame_len_s: f64,
    rf: usize,
) -> Result<FrameAssignment> {
    if rf == 0 || rf % 2 == 0 {
        return Err(Error::InvalidArgument(format!("receptive field must be odd, got {rf}")));
    }
    if !(hop_s > 0.0) {
        return Err(Error::InvalidArgument(format!("hop must be positive, got {hop_s}")));
    }
    let h = rf / 2;
    let n = inventory.len();
    let mut frames = vec![Vec::new(); n];
    let mut present = vec![false; n];
    for s in &alignment.segments {
        let q = inventory
            .index_of(&s.label)
            .ok_or_else(|| Error::Validation(format!("label {:?} is not in the inventory", s.label)))?;
        present[q] = true;
        let inside = |t: usize| {
            let c = frame_center_s(t, hop_s, frame_len_s);
            c >= s.start_s && c < s.end_s
        };
        let guess = ((s.start_s - frame_len_s / 2.0) / hop_s).floor().max(0.0) as usize;
        let mut lo = guess.saturating_sub(1);
        while lo < n_frames && !inside(lo) {
            if frame_center_s(lo, hop_s, frame_len_s) >= s.end_s {
                lo = n_frames;
                break;
            }
            lo += 1;
        }
        if lo >= n_frames {
            continue;
        }
        let mut hi = lo;
        while hi + 1 < n_frames && inside(hi + 1) {
            hi += 1;
        }
        if hi - lo + 1 >= rf {
            frames[q].extend(lo + h..=hi - h);
        }
    }
    for f in &mut frames {
        f.sort_unstable();
        f.dedup();
    }
    Ok(FrameAssignment { frames, present })
}
