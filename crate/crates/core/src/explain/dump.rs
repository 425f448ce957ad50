use std::fmt::Write as _;
use std::path::Path;

use super::Method;
use crate::error::{Error, Result};
use crate::util;

const HEADER: &str = "utterance_id,method,target_speaker,frame_index,value";

/// One line of a saliency dump.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyRow {
    pub utterance_id: String,
    pub method: Method,
    pub target_speaker: String,
    pub frame_index: usize,
    pub value: f64,
}

/// `(utterance id, method, target speaker, values)` blocks to CSV.
pub fn encode_saliency_csv<'a>(blocks: impl IntoIterator<Item = (&'a str, Method, &'a str, &'a [f64])>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (utt, method, spk, values) in blocks {
        for (t, v) in values.iter().enumerate() {
            let _ = writeln!(out, "{utt},{method},{spk},{t},{v}");
        }
    }
    out
}

pub fn write_saliency_csv<'a>(path: impl AsRef<Path>, blocks: impl IntoIterator<Item = (&'a str, Method, &'a str, &'a [f64])>) -> Result<()> {
    util::write_atomic(path.as_ref(), encode_saliency_csv(blocks).as_bytes())
}

pub fn parse_saliency_csv(src: &str) -> Result<Vec<SaliencyRow>> {
    let mut lines = src.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err(Error::Format(format!("saliency CSV must start with {HEADER:?}")));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("saliency row has {} fields: {l:?}", f.len())));
            }
            let bad = |what: &str| Error::Format(format!("bad {what} in saliency row {l:?}"));
            Ok(SaliencyRow {
                utterance_id: f[0].to_string(),
                method: f[1].parse()?,
                target_speaker: f[2].to_string(),
                frame_index: f[3].parse().map_err(|_| bad("frame index"))?,
                value: f[4].parse().map_err(|_| bad("value"))?,
            })
        })
        .collect()
}

pub fn read_saliency_csv(path: impl AsRef<Path>) -> Result<Vec<SaliencyRow>> {
    parse_saliency_csv(&util::read_string(path.as_ref())?)
}
