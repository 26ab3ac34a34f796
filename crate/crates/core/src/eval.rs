//! Error rates, segmentation images and the error-rate table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{BinaryImage, GrayImage, HilbertMap, LabeledSequence};
use crate::error::{contract, Result};
use crate::models::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub kind: ModelKind,
    /// Decoded labels at hidden steps, observed labels elsewhere.
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
    /// `true` at hidden steps.
    pub hidden: Vec<bool>,
    pub seed: u64,
    pub epochs: usize,
    pub seconds: f64,
}

impl SegmentationResult {
    /// Pairs a full-length decode with the sequence's ground truth. Observed
    /// steps always take the observed label.
    pub fn new(kind: ModelKind, decoded: &[usize], seq: &LabeledSequence) -> Result<Self> {
        let truth = seq.truth.clone().ok_or_else(|| contract("sequence has no ground truth"))?;
        if decoded.len() != seq.len() {
            return Err(contract(format!("{} decoded labels for {} steps", decoded.len(), seq.len())));
        }
        let predicted = decoded
            .iter()
            .zip(&seq.labels)
            .map(|(&d, obs)| obs.unwrap_or(d))
            .collect();
        Ok(Self {
            kind,
            predicted,
            truth,
            hidden: seq.hidden_mask(),
            seed: 0,
            epochs: 0,
            seconds: 0.0,
        })
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden.iter().filter(|&&h| h).count()
    }
}

/// Fraction of hidden steps whose decoded label differs from the truth.
pub fn error_rate(r: &SegmentationResult) -> Result<f64> {
    if r.predicted.len() != r.truth.len() || r.hidden.len() != r.truth.len() {
        return Err(contract("prediction, truth and mask lengths differ"));
    }
    let n = r.hidden_count();
    if n == 0 {
        return Err(contract("error rate is undefined without hidden steps"));
    }
    let wrong = (0..r.truth.len())
        .filter(|&t| r.hidden[t] && r.predicted[t] != r.truth[t])
        .count();
    Ok(wrong as f64 / n as f64)
}

/// Binary image of the prediction (observed labels pass through).
pub fn render_segmentation(r: &SegmentationResult, map: &HilbertMap) -> Result<BinaryImage> {
    BinaryImage::from_sequence(&r.predicted, map)
}

/// Observed labels in black / white, hidden steps mid-gray.
pub fn render_mask(seq: &LabeledSequence, map: &HilbertMap) -> Result<GrayImage> {
    if seq.len() != map.len() {
        return Err(contract("sequence length differs from the curve length"));
    }
    let mut img = GrayImage::new(map.side(), map.side(), 0.5);
    for (t, &(r, c)) in map.cells().iter().enumerate() {
        if let Some(y) = seq.labels[t] {
            img.set(r, c, if y == 0 { 1.0 } else { 0.0 });
        }
    }
    Ok(img)
}

/// First observation component, min-max scaled.
pub fn render_observations(seq: &LabeledSequence, map: &HilbertMap) -> Result<GrayImage> {
    if seq.len() != map.len() {
        return Err(contract("sequence length differs from the curve length"));
    }
    let mut values = vec![0.0; map.len()];
    for (t, &(r, c)) in map.cells().iter().enumerate() {
        values[r * map.side() + c] = seq.xs[t][0];
    }
    Ok(GrayImage::from_reals(map.side(), &values))
}

pub const PANEL_SLOTS: usize = 6;
const PANEL_GAP: usize = 2;

/// Side-by-side strip: observations, truth, mask, VSL, SVRNN, d-mTMC.
/// Missing slots are drawn mid-gray.
pub fn render_panel(side: usize, slots: &[Option<GrayImage>]) -> Result<GrayImage> {
    if slots.len() != PANEL_SLOTS {
        return Err(contract(format!("panel needs {PANEL_SLOTS} slots")));
    }
    let width = PANEL_SLOTS * side + (PANEL_SLOTS - 1) * PANEL_GAP;
    let mut panel = GrayImage::new(width, side, 1.0);
    for (k, slot) in slots.iter().enumerate() {
        let img = match slot {
            Some(img) if img.width == side && img.height == side => img.clone(),
            Some(_) => return Err(contract("panel image has the wrong size")),
            None => GrayImage::new(side, side, 0.5),
        };
        panel.blit(&img, 0, k * (side + PANEL_GAP));
    }
    Ok(panel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    /// Column label, e.g. `Camel 40%`.
    pub scenario: String,
    pub kind: ModelKind,
    pub seed: u64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decimal {
    #[default]
    Dot,
    Comma,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub decimal: Decimal,
    /// Print the reference rates next to ours.
    pub reference: bool,
}

/// Reference error rates (percent) per model for the three standard columns.
pub const REFERENCE_COLUMNS: [&str; 3] = ["Cattle 40%", "Camel 40%", "Camel 60%"];
pub const REFERENCE_RATES: [(ModelKind, [f64; 3]); 3] = [
    (ModelKind::Vsl, [15.64, 41.84, 41.80]),
    (ModelKind::Svrnn, [16.55, 12.12, 21.38]),
    (ModelKind::Dmtmc, [1.93, 2.60, 3.62]),
];

pub fn reference_rate(kind: ModelKind, scenario: &str) -> Option<f64> {
    let col = REFERENCE_COLUMNS.iter().position(|&c| c == scenario)?;
    REFERENCE_RATES.iter().find(|(k, _)| *k == kind).map(|(_, v)| v[col])
}

/// Best (lowest) error rate per cell, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(ModelKind, Vec<Option<f64>>)>,
}

/// Column order: the three standard columns first, any others sorted.
fn column_key(label: &str) -> (usize, String) {
    let pos = REFERENCE_COLUMNS.iter().position(|&c| c == label).unwrap_or(REFERENCE_COLUMNS.len());
    (pos, label.to_string())
}

pub fn emit_table(entries: &[TableEntry]) -> Table {
    let mut best: BTreeMap<(ModelKind, String), f64> = BTreeMap::new();
    for e in entries {
        let v = 100.0 * e.error_rate;
        best.entry((e.kind, e.scenario.clone()))
            .and_modify(|b| *b = b.min(v))
            .or_insert(v);
    }
    let mut columns: Vec<String> = entries.iter().map(|e| e.scenario.clone()).collect();
    columns.sort_by_key(|c| column_key(c));
    columns.dedup();
    let rows = ModelKind::ALL
        .iter()
        .map(|&k| (k, columns.iter().map(|c| best.get(&(k, c.clone())).copied()).collect()))
        .collect();
    Table { columns, rows }
}

fn fmt_pct(v: f64, decimal: Decimal) -> String {
    let s = format!("{v:.2}");
    match decimal {
        Decimal::Dot => s,
        Decimal::Comma => s.replace('.', ","),
    }
}

const MISSING: &str = "—";

impl Table {
    pub fn get(&self, kind: ModelKind, scenario: &str) -> Option<f64> {
        let col = self.columns.iter().position(|c| c == scenario)?;
        self.rows.iter().find(|(k, _)| *k == kind)?.1[col]
    }

    /// Header `model,<column>...`; with references each column gains a
    /// `<column> (ref)` neighbour. Comma decimals are quoted.
    pub fn to_csv(&self, opts: TableOptions) -> String {
        let quote = |s: String| if opts.decimal == Decimal::Comma { format!("\"{s}\"") } else { s };
        let mut out = String::from("model");
        for c in &self.columns {
            write!(out, ",{c}").unwrap();
            if opts.reference {
                write!(out, ",{c} (ref)").unwrap();
            }
        }
        out.push('\n');
        for (kind, cells) in &self.rows {
            out.push_str(kind.name());
            for (c, v) in self.columns.iter().zip(cells) {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&quote(fmt_pct(*v, opts.decimal)));
                }
                if opts.reference {
                    out.push(',');
                    if let Some(r) = reference_rate(*kind, c) {
                        out.push_str(&quote(fmt_pct(r, opts.decimal)));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table; missing cells show an em dash.
    pub fn to_text(&self, opts: TableOptions) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Model".to_string()];
        header.extend(self.columns.iter().cloned());
        grid.push(header);
        for (kind, cells) in &self.rows {
            let mut row = vec![kind.name().to_string()];
            for (c, v) in self.columns.iter().zip(cells) {
                let mut s = v.map_or(MISSING.to_string(), |v| fmt_pct(v, opts.decimal));
                if opts.reference {
                    let r = reference_rate(*kind, c).map_or(MISSING.to_string(), |r| fmt_pct(r, opts.decimal));
                    write!(s, " ({r})").unwrap();
                }
                row.push(s);
            }
            grid.push(row);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let pad = widths[j] - s.chars().count();
                    if j == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}

/// One line per run: `scenario,model,seed,error_rate_percent`.
pub fn per_seed_csv(entries: &[TableEntry]) -> String {
    let mut sorted: Vec<&TableEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| {
        column_key(&a.scenario)
            .cmp(&column_key(&b.scenario))
            .then(a.kind.cmp(&b.kind))
            .then(a.seed.cmp(&b.seed))
    });
    let mut out = String::from("scenario,model,seed,error_rate_percent\n");
    for e in sorted {
        writeln!(out, "{},{},{},{:.4}", e.scenario, e.kind.name(), e.seed, 100.0 * e.error_rate).unwrap();
    }
    out
}
