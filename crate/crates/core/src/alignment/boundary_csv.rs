use std::fmt::Write as _;
use std::path::Path;

use super::{Inventory, PhonemeAlignment, PhonemeSegment};
use crate::error::{Error, Result};
use crate::util;

const HEADER: &str = "utterance_id,label,start_s,end_s";

pub fn encode_boundary_csv(alignments: &[PhonemeAlignment]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for a in alignments {
        for s in &a.segments {
            let _ = writeln!(out, "{},{},{},{}", a.utterance_id, s.label, s.start_s, s.end_s);
        }
    }
    out
}

pub fn write_boundary_csv(path: impl AsRef<Path>, alignments: &[PhonemeAlignment]) -> Result<()> {
    util::write_atomic(path.as_ref(), encode_boundary_csv(alignments).as_bytes())
}

/// Parses boundary rows, grouping consecutive rows by utterance. The
/// duration of each alignment is its last segment end.
pub fn parse_boundary_csv(src: &str, inventory: &Inventory) -> Result<Vec<PhonemeAlignment>> {
    let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "boundary CSV must start with header {HEADER:?}, found {:?}",
                other.map(|o| o.1)
            )))
        }
    }
    let mut out: Vec<PhonemeAlignment> = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 fields, got {}", n + 1, f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad time {s:?}", n + 1)))
        };
        let seg = PhonemeSegment {
            label: f[1].to_string(),
            start_s: num(f[2])?,
            end_s: num(f[3])?,
        };
        match out.last_mut() {
            Some(a) if a.utterance_id == f[0] => a.segments.push(seg),
            _ => {
                if out.iter().any(|a| a.utterance_id == f[0]) {
                    return Err(Error::Format(format!("line {}: rows of utterance {} are not contiguous", n + 1, f[0])));
                }
                out.push(PhonemeAlignment {
                    utterance_id: f[0].to_string(),
                    segments: vec![seg],
                    duration_s: 0.0,
                })
            }
        }
    }
    for a in &mut out {
        a.duration_s = a.segments.last().map_or(0.0, |s| s.end_s);
        a.validate(inventory)?;
    }
    Ok(out)
}

pub fn read_boundary_csv_all(path: impl AsRef<Path>, inventory: &Inventory) -> Result<Vec<PhonemeAlignment>> {
    parse_boundary_csv(&util::read_string(path.as_ref())?, inventory)
}

/// Reads a file holding exactly one utterance.
pub fn read_boundary_csv(path: impl AsRef<Path>, inventory: &Inventory) -> Result<PhonemeAlignment> {
    let path = path.as_ref();
    let mut all = read_boundary_csv_all(path, inventory)?;
    if all.len() != 1 {
        return Err(Error::Format(format!("{}: expected one utterance, found {}", path.display(), all.len())));
    }
    Ok(all.remove(0))
}
