//! Machine-readable report plus CSV tables and an SVG chart of global PIDs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConsistencyMatrix, MethodConsistency, Ranking, SpeakerCorrelation};
use crate::alignment::{Inventory, PhoneClass};
use crate::error::Result;
use crate::explain::Method;
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeEntry {
    pub symbol: String,
    pub class: PhoneClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub receptive_field: usize,
    /// Window used for frame purity (the receptive field rounded up to odd).
    pub purity_window: usize,
    pub top1: f64,
    pub training_steps: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConsistencyEntry {
    pub model: String,
    #[serde(flatten)]
    pub stats: MethodConsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPidEntry {
    pub model: String,
    pub method: Method,
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub vowel_mean: Option<f64>,
    pub fricative_mean: Option<f64>,
}

impl GlobalPidEntry {
    pub fn label(&self) -> String {
        format!("{}({})", self.model, self.method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerCorrelationEntry {
    pub model: String,
    pub method: Method,
    #[serde(flatten)]
    pub stats: SpeakerCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingEntry {
    pub model: String,
    /// Per phoneme, test utterances in which it had no pure frame.
    pub utterances_missing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub speakers: usize,
    pub train_utterances: usize,
    pub test_utterances: usize,
    pub inventory: Vec<PhonemeEntry>,
    pub models: Vec<ModelSummary>,
    pub method_consistency: Vec<MethodConsistencyEntry>,
    pub global_pids: Vec<GlobalPidEntry>,
    pub model_consistency: Option<ConsistencyMatrix>,
    pub speaker_correlations: Vec<SpeakerCorrelationEntry>,
    pub ranking: Option<Ranking>,
    pub missing: Vec<MissingEntry>,
}

pub fn inventory_entries(inv: &Inventory) -> Vec<PhonemeEntry> {
    inv.phonemes
        .iter()
        .map(|p| PhonemeEntry {
            symbol: p.symbol.clone(),
            class: p.class,
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn method_consistency_csv(&self) -> String {
        let mut s = String::from("model,r1,r2,r3,utterances,r1_excluded,r2_excluded\n");
        for e in &self.method_consistency {
            let m = &e.stats;
            let _ = writeln!(s, "{},{},{},{},{},{},{}", e.model, cell(m.r1), cell(m.r2), cell(m.r3), m.utterances, m.r1_excluded, m.r2_excluded);
        }
        s
    }

    pub fn model_consistency_csv(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.model_consistency {
            let _ = writeln!(s, ",{}", m.labels.join(","));
            for (label, row) in m.labels.iter().zip(&m.values) {
                let cells: Vec<String> = row.iter().map(|v| cell(*v)).collect();
                let _ = writeln!(s, "{label},{}", cells.join(","));
            }
        }
        s
    }

    pub fn speaker_correlation_csv(&self) -> String {
        let mut s = String::from("model,method,r_w,r_b,within_pairs,between_pairs,within_excluded,between_excluded,between_sampled\n");
        for e in &self.speaker_correlations {
            let c = &e.stats;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                e.model,
                e.method,
                cell(c.r_w),
                cell(c.r_b),
                c.within_pairs,
                c.between_pairs,
                c.within_excluded,
                c.between_excluded,
                c.between_sampled
            );
        }
        s
    }

    pub fn global_pid_csv(&self) -> String {
        let labels: Vec<String> = self.global_pids.iter().map(GlobalPidEntry::label).collect();
        let mut s = format!("phoneme,class,{}\n", labels.join(","));
        for (q, p) in self.inventory.iter().enumerate() {
            let cells: Vec<String> = self.global_pids.iter().map(|g| cell(g.values[q])).collect();
            let class = serde_json::to_value(p.class).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(s, "{},{class},{}", p.symbol, cells.join(","));
        }
        s
    }

    /// One bar panel per model and method, each scaled to its own maximum.
    pub fn global_pid_svg(&self) -> String {
        let n = self.inventory.len().max(1);
        let (bar, gap, panel_h, left, top) = (16.0, 4.0, 140.0, 60.0, 30.0);
        let width = left + n as f64 * (bar + gap) + 20.0;
        let height = top + self.global_pids.len() as f64 * (panel_h + 50.0) + 10.0;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (i, g) in self.global_pids.iter().enumerate() {
            let y0 = top + i as f64 * (panel_h + 50.0);
            let _ = writeln!(s, r#"<text x="{left}" y="{:.1}" font-size="12">{}</text>"#, y0 - 8.0, escape(&g.label()));
            let present: Vec<f64> = g.values.iter().flatten().copied().collect();
            let lo = present.iter().copied().fold(0.0f64, f64::min);
            let hi = present.iter().copied().fold(0.0f64, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let base = y0 + panel_h * hi / span;
            let _ = writeln!(s, r#"<line x1="{left}" x2="{:.1}" y1="{base:.1}" y2="{base:.1}" stroke="black"/>"#, width - 20.0);
            for (q, v) in g.values.iter().enumerate() {
                let x = left + q as f64 * (bar + gap);
                if let Some(v) = v {
                    let h = panel_h * v.abs() / span;
                    let y = if *v >= 0.0 { base - h } else { base };
                    let fill = match self.inventory[q].class {
                        PhoneClass::Vowel => "#c0392b",
                        PhoneClass::Fricative => "#2471a3",
                        _ => "#7f8c8d",
                    };
                    let _ = writeln!(s, r#"<rect x="{x:.1}" y="{y:.1}" width="{bar}" height="{h:.1}" fill="{fill}"/>"#);
                }
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    x + bar / 2.0,
                    y0 + panel_h + 14.0,
                    escape(&self.inventory[q].symbol)
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write_json(&self, dir: &Path) -> Result<()> {
        util::write_atomic(&dir.join("report.json"), self.to_json()?.as_bytes())
    }

    /// Writes `report.json`, the CSV tables and `global_pid.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_json(dir)?;
        util::write_atomic(&dir.join("method_consistency.csv"), self.method_consistency_csv().as_bytes())?;
        util::write_atomic(&dir.join("model_consistency.csv"), self.model_consistency_csv().as_bytes())?;
        util::write_atomic(&dir.join("speaker_correlation.csv"), self.speaker_correlation_csv().as_bytes())?;
        util::write_atomic(&dir.join("global_pid.csv"), self.global_pid_csv().as_bytes())?;
        util::write_atomic(&dir.join("global_pid.svg"), self.global_pid_svg().as_bytes())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
