//! Binary images: Netpbm I/O, Hilbert (de)serialization and a small synthetic
//! shape generator.
//!
//! Label 0 is the background class (white in PBM, light in PGM) and label 1
//! the foreground (black / dark).

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hilbert::HilbertMap;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    side: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(contract(format!("image side {side} is not a power of two >= 2")));
        }
        Ok(Self {
            side,
            pixels: vec![0; side * side],
        })
    }

    pub fn from_pixels(side: usize, pixels: Vec<u8>) -> Result<Self> {
        let mut img = Self::new(side)?;
        if pixels.len() != side * side || pixels.iter().any(|&p| p > 1) {
            return Err(contract("pixels must be side*side values in {0, 1}"));
        }
        img.pixels = pixels;
        Ok(img)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.pixels[row * self.side + col] = v;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.pixels.iter().filter(|&&p| p == 1).count() as f64 / self.pixels.len() as f64
    }

    /// Labels in curve order.
    pub fn to_sequence(&self, map: &HilbertMap) -> Result<Vec<usize>> {
        if map.side() != self.side {
            return Err(contract(format!("image side {} vs curve side {}", self.side, map.side())));
        }
        Ok(map.cells().iter().map(|&(r, c)| self.get(r, c) as usize).collect())
    }

    pub fn from_sequence(labels: &[usize], map: &HilbertMap) -> Result<Self> {
        if labels.len() != map.len() {
            return Err(contract(format!("{} labels for a curve of {} cells", labels.len(), map.len())));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(contract("binary image labels must be 0 or 1"));
        }
        let mut img = Self::new(map.side())?;
        for (&l, &(r, c)) in labels.iter().zip(map.cells()) {
            img.set(r, c, l as u8);
        }
        Ok(img)
    }

    /// Plain PBM (P1), one row per line.
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.side, self.side);
        for r in 0..self.side {
            let row: Vec<&str> = (0..self.side).map(|c| if self.get(r, c) == 1 { "1" } else { "0" }).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_pbm())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::parse(&bytes)
    }

    /// Parses P1/P4/P2/P5, thresholds at mid-gray and center-pads with the
    /// background label up to the next power-of-two square (at least 2).
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let raster = parse_netpbm(bytes)?;
        let side = raster.width.max(raster.height).max(2).next_power_of_two();
        let mut img = Self::new(side)?;
        let (off_r, off_c) = ((side - raster.height) / 2, (side - raster.width) / 2);
        for r in 0..raster.height {
            for c in 0..raster.width {
                img.set(r + off_r, c + off_c, raster.labels[r * raster.width + c]);
            }
        }
        Ok(img)
    }
}

/// Grayscale raster for previews and panels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Values in `[0, 1]`, 1 = white.
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            values: vec![fill; width * height],
        }
    }

    /// Background white, foreground black.
    pub fn from_binary(img: &BinaryImage) -> Self {
        let side = img.side();
        Self {
            width: side,
            height: side,
            values: img.pixels().iter().map(|&p| if p == 1 { 0.0 } else { 1.0 }).collect(),
        }
    }

    /// Linear min-max rescale of per-cell reals.
    pub fn from_reals(side: usize, values: &[f64]) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        Self {
            width: side,
            height: side,
            values: values.iter().map(|v| (v - lo) / span).collect(),
        }
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn blit(&mut self, other: &GrayImage, row: usize, col: usize) {
        for r in 0..other.height {
            for c in 0..other.width {
                self.set(row + r, col + c, other.get(r, c));
            }
        }
    }

    /// Plain PGM (P2) with maxval 255.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| ((self.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

struct Raster {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                message: "number out of range".into(),
            })
    }

    /// Single plain-PBM digit; whitespace between digits is optional.
    fn bit(&mut self) -> Result<u8> {
        self.skip_ws_and_comments();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(0)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(1)
            }
            Some(_) => Err(self.err("expected '0' or '1'")),
            None => Err(self.err("unexpected end of pixel data")),
        }
    }

    /// Exactly one whitespace byte separating header and binary raster.
    fn single_ws(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("expected whitespace before raster")),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!("raster truncated: need {n} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn parse_netpbm(bytes: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(2).map_err(|_| Error::Parse {
        offset: 0,
        message: "missing magic number".into(),
    })?;
    let kind = match magic {
        b"P1" => 1,
        b"P2" => 2,
        b"P4" => 4,
        b"P5" => 5,
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("unsupported magic {:?}", String::from_utf8_lossy(magic)),
            })
        }
    };
    let width = cur.number()?;
    let height = cur.number()?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    let n = width * height;
    let mut labels = Vec::with_capacity(n);
    match kind {
        1 => {
            for _ in 0..n {
                labels.push(cur.bit()?);
            }
        }
        4 => {
            cur.single_ws()?;
            let stride = width.div_ceil(8);
            let data = cur.take(stride * height)?;
            for r in 0..height {
                for c in 0..width {
                    let byte = data[r * stride + c / 8];
                    labels.push((byte >> (7 - c % 8)) & 1);
                }
            }
        }
        _ => {
            let maxval = cur.number()?;
            if maxval == 0 || maxval > 65535 {
                return Err(cur.err(format!("invalid maxval {maxval}")));
            }
            let threshold = maxval as f64 / 2.0;
            let to_label = |v: usize| if (v as f64) < threshold { 1 } else { 0 };
            if kind == 2 {
                for _ in 0..n {
                    let at = cur.pos;
                    let v = cur.number()?;
                    if v > maxval {
                        return Err(Error::Parse {
                            offset: at,
                            message: format!("sample {v} exceeds maxval {maxval}"),
                        });
                    }
                    labels.push(to_label(v));
                }
            } else {
                cur.single_ws()?;
                let width_bytes = if maxval < 256 { 1 } else { 2 };
                let data = cur.take(n * width_bytes)?;
                for k in 0..n {
                    let v = if width_bytes == 1 {
                        data[k] as usize
                    } else {
                        ((data[2 * k] as usize) << 8) | data[2 * k + 1] as usize
                    };
                    labels.push(to_label(v));
                }
            }
        }
    }
    Ok(Raster { width, height, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Blob,
    Polygon,
}

impl std::str::FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "disk" => Ok(ShapeKind::Disk),
            "blob" => Ok(ShapeKind::Blob),
            "polygon" => Ok(ShapeKind::Polygon),
            _ => Err(format!("unknown shape '{s}'")),
        }
    }
}

pub const MIN_FOREGROUND: f64 = 0.2;
pub const MAX_FOREGROUND: f64 = 0.6;

/// Rasterizes a disk, testing pixel centers.
pub fn disk(side: usize, center: (f64, f64), radius: f64) -> Result<BinaryImage> {
    let mut img = BinaryImage::new(side)?;
    for r in 0..side {
        for c in 0..side {
            let (dy, dx) = (r as f64 + 0.5 - center.0, c as f64 + 0.5 - center.1);
            if dy * dy + dx * dx <= radius * radius {
                img.set(r, c, 1);
            }
        }
    }
    Ok(img)
}

/// A single 4-connected foreground region covering 20-60% of the image.
pub fn generate_shape(kind: ShapeKind, side: usize, seed: u64) -> Result<BinaryImage> {
    BinaryImage::new(side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    loop {
        let raw = match kind {
            ShapeKind::Disk => {
                let radius = s * rng.random_range(0.26..0.42);
                let cy = rng.random_range(radius..(s - radius).max(radius + 1e-9));
                let cx = rng.random_range(radius..(s - radius).max(radius + 1e-9));
                disk(side, (cy, cx), radius)?
            }
            ShapeKind::Blob => blob(side, &mut rng)?,
            ShapeKind::Polygon => star_polygon(side, &mut rng)?,
        };
        let img = largest_component(&raw);
        let f = img.foreground_fraction();
        if f > MIN_FOREGROUND && f < MAX_FOREGROUND {
            return Ok(img);
        }
    }
}

fn blob<R: Rng>(side: usize, rng: &mut R) -> Result<BinaryImage> {
    let s = side as f64;
    let mut img = BinaryImage::new(side)?;
    let mut center = (s / 2.0, s / 2.0);
    let count = rng.random_range(5..10);
    for _ in 0..count {
        let radius = s * rng.random_range(0.08..0.2);
        for r in 0..side {
            for c in 0..side {
                let (dy, dx) = (r as f64 + 0.5 - center.0, c as f64 + 0.5 - center.1);
                if dy * dy + dx * dx <= radius * radius {
                    img.set(r, c, 1);
                }
            }
        }
        // Next disk overlaps the current one.
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let step = radius * rng.random_range(0.5..0.9);
        center.0 = (center.0 + step * angle.sin()).clamp(0.15 * s, 0.85 * s);
        center.1 = (center.1 + step * angle.cos()).clamp(0.15 * s, 0.85 * s);
    }
    Ok(img)
}

fn star_polygon<R: Rng>(side: usize, rng: &mut R) -> Result<BinaryImage> {
    let s = side as f64;
    let n = rng.random_range(5..10);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let center = (s / 2.0, s / 2.0);
    let verts: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let radius = s * rng.random_range(0.22..0.48);
            (center.0 + radius * a.sin(), center.1 + radius * a.cos())
        })
        .collect();
    let mut img = BinaryImage::new(side)?;
    for r in 0..side {
        for c in 0..side {
            if point_in_polygon((r as f64 + 0.5, c as f64 + 0.5), &verts) {
                img.set(r, c, 1);
            }
        }
    }
    Ok(img)
}

fn point_in_polygon(p: (f64, f64), verts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = verts.len() - 1;
    for i in 0..verts.len() {
        let (yi, xi) = verts[i];
        let (yj, xj) = verts[j];
        if (yi > p.0) != (yj > p.0) && p.1 < (xj - xi) * (p.0 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Keeps only the largest 4-connected foreground component.
pub fn largest_component(img: &BinaryImage) -> BinaryImage {
    let side = img.side();
    let mut comp = vec![usize::MAX; side * side];
    let mut best = (0usize, 0usize);
    let mut next = 0;
    for start in 0..side * side {
        if img.pixels[start] == 0 || comp[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = next;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (r, c) = (k / side, k % side);
            let mut visit = |rr: usize, cc: usize| {
                let kk = rr * side + cc;
                if img.pixels[kk] == 1 && comp[kk] == usize::MAX {
                    comp[kk] = next;
                    queue.push_back(kk);
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < side {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < side {
                visit(r, c + 1);
            }
        }
        if size > best.1 {
            best = (next, size);
        }
        next += 1;
    }
    BinaryImage {
        side,
        pixels: comp
            .iter()
            .map(|&k| u8::from(k == best.0 && best.1 > 0))
            .collect(),
    }
}

/// Number of 4-connected foreground components.
pub fn component_count(img: &BinaryImage) -> usize {
    let mut rest = img.clone();
    let mut count = 0;
    while rest.pixels.iter().any(|&p| p == 1) {
        let big = largest_component(&rest);
        for (p, b) in rest.pixels.iter_mut().zip(&big.pixels) {
            if *b == 1 {
                *p = 0;
            }
        }
        count += 1;
    }
    count
}
