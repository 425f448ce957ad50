//! Phoneme boundaries: inventory, TextGrid and CSV parsing, and frame selection.

mod boundary_csv;
mod frames;
mod inventory;
mod textgrid;

pub use boundary_csv::{encode_boundary_csv, parse_boundary_csv, read_boundary_csv, read_boundary_csv_all, write_boundary_csv};
pub use frames::{frame_center_s, frames_for_phonemes, FrameAssignment};
pub use inventory::{Inventory, LabelMap, PhoneClass, Phoneme};
pub use textgrid::{parse_textgrid, parse_textgrid_str, TextGridOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeSegment {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Ordered, non-overlapping phoneme segments of one utterance. Gaps are silence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeAlignment {
    pub utterance_id: String,
    pub segments: Vec<PhonemeSegment>,
    pub duration_s: f64,
}

impl PhonemeAlignment {
    pub fn new(utterance_id: impl Into<String>, segments: Vec<PhonemeSegment>, duration_s: f64, inventory: &Inventory) -> Result<Self> {
        let a = Self {
            utterance_id: utterance_id.into(),
            segments,
            duration_s,
        };
        a.validate(inventory)?;
        Ok(a)
    }

    pub fn validate(&self, inventory: &Inventory) -> Result<()> {
        let id = &self.utterance_id;
        let mut prev_end = 0.0f64;
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite()) || s.end_s <= s.start_s {
                return Err(Error::Validation(format!(
                    "{id}: segment {i} ({}) has end {} <= start {}",
                    s.label, s.end_s, s.start_s
                )));
            }
            if s.start_s < prev_end - 1e-9 || s.start_s < -1e-9 {
                return Err(Error::Validation(format!(
                    "{id}: segment {i} ({}) starts at {} before previous end {prev_end}",
                    s.label, s.start_s
                )));
            }
            if inventory.index_of(&s.label).is_none() {
                return Err(Error::Validation(format!("{id}: label {:?} is not in the inventory", s.label)));
            }
            prev_end = s.end_s;
        }
        if prev_end > self.duration_s + 1e-9 {
            return Err(Error::Validation(format!(
                "{id}: segments end at {prev_end} beyond duration {}",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Re-derives variant suffixes by occurrence order over the whole utterance.
    pub fn renumber_variants(&mut self) {
        let bases: Vec<String> = self.segments.iter().map(|s| inventory::base_symbol(&s.label).to_string()).collect();
        let labels = LabelMap::default().assign_variants(bases.iter().map(String::as_str));
        for (s, l) in self.segments.iter_mut().zip(labels) {
            s.label = l;
        }
    }

    /// Joins per-recording alignments, shifting each part by its start offset in seconds.
    pub fn concatenate(utterance_id: impl Into<String>, parts: &[(&PhonemeAlignment, f64)], duration_s: f64) -> Self {
        let segments = parts
            .iter()
            .flat_map(|(a, off)| {
                a.segments.iter().map(move |s| PhonemeSegment {
                    label: s.label.clone(),
                    start_s: s.start_s + off,
                    end_s: s.end_s + off,
                })
            })
            .collect();
        Self {
            utterance_id: utterance_id.into(),
            segments,
            duration_s,
        }
    }
}
