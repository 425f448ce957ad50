use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneClass {
    Vowel,
    Fricative,
    Plosive,
    Nasal,
    Approximant,
}

impl PhoneClass {
    pub fn is_vowel(self) -> bool {
        self == PhoneClass::Vowel
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phoneme {
    /// Context-dependent symbol, e.g. `f_2` for the second `f` of the digit sequence.
    pub symbol: String,
    pub digit: u8,
    pub class: PhoneClass,
}

impl Phoneme {
    /// Symbol with any `_N` variant suffix removed.
    pub fn base(&self) -> &str {
        base_symbol(&self.symbol)
    }
}

pub(crate) fn base_symbol(s: &str) -> &str {
    match s.rsplit_once('_') {
        Some((b, n)) if !b.is_empty() && !n.is_empty() && n.bytes().all(|c| c.is_ascii_digit()) => b,
        _ => s,
    }
}

/// Ordered phoneme inventory; PIDs and frame assignments are indexed by position here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub phonemes: Vec<Phoneme>,
}

const DIGITS: [&[(&str, PhoneClass)]; 10] = {
    use PhoneClass::*;
    [
        &[("z", Fricative), ("I", Vowel), ("r", Approximant), ("ow", Vowel)],
        &[("w", Approximant), ("5", Vowel), ("n", Nasal)],
        &[("t^h", Plosive), ("0", Vowel)],
        &[("T", Fricative), ("r_2", Approximant), ("i:", Vowel)],
        &[("f", Fricative), ("6", Vowel), ("r_3", Approximant)],
        &[("f_2", Fricative), ("aj", Vowel), ("v", Fricative)],
        &[("s", Fricative), ("I_2", Vowel), ("k", Plosive), ("s_2", Fricative)],
        &[("s_3", Fricative), ("E", Vowel), ("v_2", Fricative), ("n=", Nasal)],
        &[("ej", Vowel), ("P", Plosive)],
        &[("n_2", Nasal), ("aj_2", Vowel), ("n_3", Nasal)],
    ]
};

impl Inventory {
    /// The 31 context-dependent phonemes of the spoken digits zero..nine, in digit order.
    pub fn digits() -> Self {
        let phonemes = DIGITS
            .iter()
            .enumerate()
            .flat_map(|(d, ps)| {
                ps.iter().map(move |(s, c)| Phoneme {
                    symbol: s.to_string(),
                    digit: d as u8,
                    class: *c,
                })
            })
            .collect();
        Self { phonemes }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let inv: Inventory = serde_json::from_str(&util::read_string(path.as_ref())?)?;
        let mut seen = std::collections::HashSet::new();
        if let Some(p) = inv.phonemes.iter().find(|p| !seen.insert(p.symbol.as_str())) {
            return Err(Error::Format(format!("duplicate inventory symbol {:?}", p.symbol)));
        }
        Ok(inv)
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.phonemes.iter().position(|p| p.symbol == symbol)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.phonemes.iter().map(|p| p.symbol.as_str())
    }

    /// Inventory indices of the phonemes of `digit`, in spoken order.
    pub fn digit_phonemes(&self, digit: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.phonemes[i].digit == digit).collect()
    }
}

/// Maps aligner output symbols to inventory base symbols, then numbers
/// repeated bases by their occurrence order within the utterance
/// (`f`, `f_2`, `f_3`, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub map: BTreeMap<String, String>,
}

impl LabelMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let map: BTreeMap<String, String> = serde_json::from_str(&util::read_string(path.as_ref())?)?;
        Ok(Self { map })
    }

    pub fn base<'a>(&'a self, symbol: &'a str) -> &'a str {
        self.map.get(symbol).map(String::as_str).unwrap_or(symbol)
    }

    /// Context-dependent labels for an utterance's aligner labels, in order.
    /// Labels that already carry a variant suffix are kept as they are.
    pub fn assign_variants<'a>(&self, labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        labels
            .into_iter()
            .map(|raw| {
                let b = self.base(raw);
                if base_symbol(b) != b {
                    return b.to_string();
                }
                let n = counts.entry(b.to_string()).or_insert(0);
                *n += 1;
                if *n == 1 {
                    b.to_string()
                } else {
                    format!("{b}_{n}")
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_inventory_has_31_phonemes() {
        let inv = Inventory::digits();
        assert_eq!(inv.len(), 31);
        let vowels = inv.phonemes.iter().filter(|p| p.class.is_vowel()).count();
        assert_eq!(vowels, 11);
        assert_eq!(inv.digit_phonemes(2).iter().map(|&i| inv.phonemes[i].symbol.as_str()).collect::<Vec<_>>(), ["t^h", "0"]);
        let unique: std::collections::HashSet<_> = inv.symbols().collect();
        assert_eq!(unique.len(), 31);
    }

    #[test]
    fn occurrence_order_reproduces_the_inventory() {
        let inv = Inventory::digits();
        let bases: Vec<&str> = inv.phonemes.iter().map(|p| p.base()).collect();
        let got = LabelMap::default().assign_variants(bases);
        assert_eq!(got, inv.symbols().collect::<Vec<_>>());
    }

    #[test]
    fn mapping_and_suffix_handling() {
        let mut lm = LabelMap::default();
        lm.map.insert("F".into(), "f".into());
        assert_eq!(lm.assign_variants(["F", "F", "f_3", "n="]), ["f", "f_2", "f_3", "n="]);
        assert_eq!(base_symbol("aj_2"), "aj");
        assert_eq!(base_symbol("i:"), "i:");
        assert_eq!(base_symbol("t^h"), "t^h");
    }
}
