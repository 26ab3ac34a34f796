//! Partially labeled observation sequences and their text archive.
//!
//! Archive layout: a TOML header, a line containing only `---`, then one
//! tab-separated row per step with columns `t`, `x`, `y`, `mask`, `truth`:
//!
//! ```text
//! format = "tmc-sequence"
//! version = 1
//! length = 4
//! classes = 2
//! d_x = 1
//!
//! [provenance]
//! fraction = 0.5
//! mask_seed = 3
//! ---
//! t	x	y	mask	truth
//! 0	-0.25	0	L	0
//! 1	1.5	?	U	1
//! ```
//!
//! `x` holds the comma-joined components in shortest round-trip notation,
//! `y` is the observed label or `?`, `mask` is `L` or `U`, and `truth` is the
//! hidden ground truth or `-` when unknown.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::noise::NoiseSpec;
use crate::error::{contract, Error, Result};

pub const ARCHIVE_FORMAT: &str = "tmc-sequence";
pub const ARCHIVE_VERSION: u32 = 1;

/// Affine map applied to the raw observations: `stored = (raw - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Fits per-component mean / std over the sequence and applies it.
    pub fn fit_apply(xs: &mut [Vec<f64>]) -> Self {
        let d = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for x in xs.iter() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for x in xs.iter() {
            for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in std.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        for x in xs.iter_mut() {
            for ((v, m), s) in x.iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
        Self { mean, std }
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    pub fraction: f64,
    pub mask_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub xs: Vec<Vec<f64>>,
    /// Observed label at positions in L, `None` at positions in U.
    pub labels: Vec<Option<usize>>,
    /// Full ground truth, when known.
    pub truth: Option<Vec<usize>>,
    pub classes: usize,
    pub provenance: Provenance,
}

impl LabeledSequence {
    /// Hides `truth[t]` wherever `hidden[t]` is set.
    pub fn from_truth(xs: Vec<Vec<f64>>, truth: Vec<usize>, hidden: &[bool], classes: usize) -> Result<Self> {
        if truth.len() != xs.len() || hidden.len() != xs.len() {
            return Err(contract("xs, truth and mask must have the same length"));
        }
        let labels = truth
            .iter()
            .zip(hidden)
            .map(|(&y, &h)| (!h).then_some(y))
            .collect();
        let seq = Self {
            xs,
            labels,
            truth: Some(truth),
            classes,
            provenance: Provenance::default(),
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Sequence with nothing hidden and no separate ground truth.
    pub fn fully_observed(xs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let hidden = vec![false; xs.len()];
        Self::from_truth(xs, labels, &hidden, classes)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    pub fn is_hidden(&self, t: usize) -> bool {
        self.labels[t].is_none()
    }

    pub fn hidden_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_none).collect()
    }

    pub fn unobserved(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.is_hidden(t)).collect()
    }

    pub fn observed(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| !self.is_hidden(t)).collect()
    }

    /// Steps `range` as a standalone sequence (provenance is kept).
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(contract(format!("window {range:?} outside a sequence of {}", self.len())));
        }
        Ok(Self {
            xs: self.xs[range.clone()].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            truth: self.truth.as_ref().map(|t| t[range].to_vec()),
            classes: self.classes,
            provenance: self.provenance.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(contract("sequence is empty"));
        }
        if self.classes < 2 {
            return Err(contract("need at least two label classes"));
        }
        if self.labels.len() != self.len() {
            return Err(contract("label slots and observations differ in length"));
        }
        let d = self.d_x();
        if d == 0 || self.xs.iter().any(|x| x.len() != d) {
            return Err(contract("observations must share one positive dimension"));
        }
        if self.xs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(contract("observations must be finite"));
        }
        if self.labels.iter().flatten().any(|&y| y >= self.classes) {
            return Err(contract("observed label outside the class range"));
        }
        if let Some(truth) = &self.truth {
            if truth.len() != self.len() || truth.iter().any(|&y| y >= self.classes) {
                return Err(contract("ground truth has the wrong length or range"));
            }
            for (obs, &tr) in self.labels.iter().zip(truth) {
                if obs.is_some_and(|o| o != tr) {
                    return Err(contract("observed label disagrees with ground truth"));
                }
            }
        }
        Ok(())
    }

    pub fn to_archive(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Header<'a> {
            format: &'a str,
            version: u32,
            length: usize,
            classes: usize,
            d_x: usize,
            provenance: &'a Provenance,
        }
        let header = Header {
            format: ARCHIVE_FORMAT,
            version: ARCHIVE_VERSION,
            length: self.len(),
            classes: self.classes,
            d_x: self.d_x(),
            provenance: &self.provenance,
        };
        let mut out = toml::to_string(&header).map_err(|e| contract(format!("archive header: {e}")))?;
        out.push_str("---\nt\tx\ty\tmask\ttruth\n");
        for t in 0..self.len() {
            let x: Vec<String> = self.xs[t].iter().map(|v| format!("{v:?}")).collect();
            let y = self.labels[t].map_or("?".to_string(), |y| y.to_string());
            let mask = if self.is_hidden(t) { "U" } else { "L" };
            let truth = self.truth.as_ref().map_or("-".to_string(), |tr| tr[t].to_string());
            writeln!(out, "{t}\t{}\t{y}\t{mask}\t{truth}", x.join(",")).unwrap();
        }
        Ok(out)
    }

    pub fn from_archive(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Header {
            format: String,
            version: u32,
            length: usize,
            classes: usize,
            d_x: usize,
            provenance: Provenance,
        }
        let split = text
            .find("\n---\n")
            .ok_or_else(|| parse_err(0, "missing '---' header terminator"))?;
        let header: Header = toml::from_str(&text[..split + 1]).map_err(|e| {
            parse_err(e.span().map_or(0, |s| s.start), format!("archive header: {}", e.message()))
        })?;
        if header.format != ARCHIVE_FORMAT {
            return Err(parse_err(0, format!("unexpected format '{}'", header.format)));
        }
        if header.version != ARCHIVE_VERSION {
            return Err(parse_err(0, format!("unsupported archive version {}", header.version)));
        }

        let mut offset = split + 5;
        let body = &text[offset..];
        let mut lines = body.split_inclusive('\n');
        let columns = lines.next().unwrap_or("");
        if columns.trim_end() != "t\tx\ty\tmask\ttruth" {
            return Err(parse_err(offset, "unexpected column header"));
        }
        offset += columns.len();

        let mut xs = Vec::with_capacity(header.length);
        let mut labels = Vec::with_capacity(header.length);
        let mut truth = Vec::with_capacity(header.length);
        let mut truth_known = true;
        for line in lines {
            let row = line.trim_end_matches(['\n', '\r']);
            if row.is_empty() {
                offset += line.len();
                continue;
            }
            let fields: Vec<&str> = row.split('\t').collect();
            if fields.len() != 5 {
                return Err(parse_err(offset, format!("expected 5 columns, got {}", fields.len())));
            }
            let t: usize = fields[0].parse().map_err(|_| parse_err(offset, "bad step index"))?;
            if t != xs.len() {
                return Err(parse_err(offset, format!("step {t} out of order")));
            }
            let x: Vec<f64> = fields[1]
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(offset, "bad observation value"))?;
            if x.len() != header.d_x {
                return Err(parse_err(offset, format!("observation has {} components, expected {}", x.len(), header.d_x)));
            }
            let label = match fields[2] {
                "?" => None,
                s => Some(s.parse::<usize>().map_err(|_| parse_err(offset, "bad label"))?),
            };
            let hidden = match fields[3] {
                "U" => true,
                "L" => false,
                _ => return Err(parse_err(offset, "mask must be 'L' or 'U'")),
            };
            if hidden != label.is_none() {
                return Err(parse_err(offset, "mask and label column disagree"));
            }
            match fields[4] {
                "-" => truth_known = false,
                s => truth.push(s.parse::<usize>().map_err(|_| parse_err(offset, "bad truth label"))?),
            }
            xs.push(x);
            labels.push(label);
            offset += line.len();
        }
        if xs.len() != header.length {
            return Err(parse_err(offset, format!("{} rows, header says {}", xs.len(), header.length)));
        }
        let seq = Self {
            xs,
            labels,
            truth: (truth_known && truth.len() == header.length).then_some(truth),
            classes: header.classes,
            provenance: header.provenance,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_archive()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&fs::read_to_string(path)?)
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}
