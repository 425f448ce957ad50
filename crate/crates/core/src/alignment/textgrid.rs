use std::path::Path;

use super::{Inventory, LabelMap, PhonemeAlignment, PhonemeSegment};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone)]
pub struct TextGridOptions {
    pub tier: String,
    /// Interval labels treated as silence and dropped.
    pub silence: Vec<String>,
    pub label_map: LabelMap,
}

impl Default for TextGridOptions {
    fn default() -> Self {
        Self {
            tier: "phones".into(),
            silence: vec![String::new(), "sil".into(), "sp".into()],
            label_map: LabelMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Str(String),
    Num(f64),
}

/// Keeps the string and number literals of a long- or short-form TextGrid;
/// keys, `[n]` indices and `<exists>` flags carry no information for parsing.
fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let b: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match b.get(i) {
                    None => return Err(Error::Format("unterminated string in TextGrid".into())),
                    Some('"') if b.get(i + 1) == Some(&'"') => {
                        s.push('"');
                        i += 2;
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Tok::Str(s));
        } else if c == '[' {
            while i < b.len() && b[i] != ']' {
                i += 1;
            }
            i += 1;
        } else if c == '<' {
            while i < b.len() && b[i] != '>' {
                i += 1;
            }
            i += 1;
        } else if c == '!' {
            while i < b.len() && b[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            let start = i;
            i += 1;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || matches!(b[i], '.' | '-' | '+')) {
                i += 1;
            }
            let text: String = b[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {text:?} in TextGrid")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            while i < b.len() && (b[i].is_alphanumeric() || matches!(b[i], '_' | '?')) {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Tok>,
    pos: usize,
}

impl Cursor {
    fn num(&mut self) -> Result<f64> {
        match self.toks.get(self.pos) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(*v)
            }
            other => Err(Error::Format(format!("expected number in TextGrid, found {other:?}"))),
        }
    }

    fn string(&mut self) -> Result<String> {
        match self.toks.get(self.pos) {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            other => Err(Error::Format(format!("expected string in TextGrid, found {other:?}"))),
        }
    }

    fn count(&mut self) -> Result<usize> {
        let v = self.num()?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Format(format!("bad count {v} in TextGrid")));
        }
        Ok(v as usize)
    }
}

fn decode(bytes: &[u8]) -> Result<String> {
    let utf16 = |be: bool| -> Result<String> {
        let units: Vec<u16> = bytes[2..]
            .chunks_exact(2)
            .map(|c| if be { u16::from_be_bytes([c[0], c[1]]) } else { u16::from_le_bytes([c[0], c[1]]) })
            .collect();
        String::from_utf16(&units).map_err(|_| Error::Format("invalid UTF-16 TextGrid".into()))
    };
    match bytes {
        [0xFF, 0xFE, ..] => utf16(false),
        [0xFE, 0xFF, ..] => utf16(true),
        _ => {
            let s = std::str::from_utf8(bytes).map_err(|_| Error::Format("TextGrid is not valid UTF-8".into()))?;
            Ok(s.trim_start_matches('\u{feff}').to_string())
        }
    }
}

pub fn parse_textgrid(path: impl AsRef<Path>, inventory: &Inventory, opts: &TextGridOptions) -> Result<PhonemeAlignment> {
    let path = path.as_ref();
    let src = decode(&util::read(path)?)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_textgrid_str(&src, &id, inventory, opts)
}

pub fn parse_textgrid_str(src: &str, utterance_id: &str, inventory: &Inventory, opts: &TextGridOptions) -> Result<PhonemeAlignment> {
    let mut c = Cursor {
        toks: tokenize(src)?,
        pos: 0,
    };
    if c.string()? != "ooTextFile" || c.string()? != "TextGrid" {
        return Err(Error::Format("not a TextGrid file".into()));
    }
    let _xmin = c.num()?;
    let xmax = c.num()?;
    let n_tiers = c.count()?;
    let mut names = Vec::new();
    for _ in 0..n_tiers {
        let class = c.string()?;
        let name = c.string()?;
        c.num()?;
        c.num()?;
        let n = c.count()?;
        let interval = class == "IntervalTier";
        if !interval && class != "TextTier" {
            return Err(Error::Format(format!("unknown tier class {class:?}")));
        }
        if interval && name == opts.tier {
            let mut raw = Vec::with_capacity(n);
            for _ in 0..n {
                let s = c.num()?;
                let e = c.num()?;
                let label = c.string()?;
                let label = label.trim();
                if !opts.silence.iter().any(|x| x == label) {
                    raw.push((label.to_string(), s, e));
                }
            }
            let labels = opts.label_map.assign_variants(raw.iter().map(|r| r.0.as_str()));
            let segments = raw
                .iter()
                .zip(labels)
                .map(|((_, s, e), label)| PhonemeSegment {
                    label,
                    start_s: *s,
                    end_s: *e,
                })
                .collect();
            return PhonemeAlignment::new(utterance_id, segments, xmax, inventory);
        }
        for _ in 0..n {
            c.num()?;
            if interval {
                c.num()?;
            }
            c.string()?;
        }
        names.push(name);
    }
    Err(Error::Format(format!("no interval tier named {:?} (found {names:?})", opts.tier)))
}
