//! Appearance descriptors and galleries.
//!
//! Each detection carries a 128-dimensional unit-norm descriptor. Tracks
//! accumulate the descriptors of the detections they were associated with
//! in a bounded FIFO gallery; the appearance cost between a track and a
//! candidate detection is the smallest cosine distance between the
//! candidate and any gallery member, which is what lets a track reclaim
//! its identity after a long occlusion.
//!
//! A small built-in encoder turns raw pixel patches into descriptors so
//! the pipeline can run without an external embedding model: an 8-bin
//! histogram of a hue-like and an intensity-like channel over a 4×2
//! spatial grid, L2-normalized (4 · 2 · 2 · 8 = 128).

use std::collections::VecDeque;

use thiserror::Error;

pub const DESCRIPTOR_DIM: usize = 128;

/// Unit-norm tolerance accepted at construction boundaries.
const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AppearanceError {
    #[error("descriptor norm {0} is not within {NORM_TOL} of 1")]
    NotUnitNorm(f64),
    #[error("descriptor has {0} components, expected {DESCRIPTOR_DIM}")]
    WrongDimension(usize),
    #[error("descriptor contains non-finite components")]
    NonFinite,
    #[error("descriptor norm is zero, cannot normalize")]
    ZeroNorm,
    #[error("gallery capacity must be at least 1")]
    ZeroCapacity,
    #[error("appearance distance is undefined against an empty gallery")]
    EmptyGallery,
    #[error("unknown encoder '{0}'")]
    UnknownEncoder(String),
    #[error("patch buffer holds {got} bytes, expected {want} ({w}x{h} RGB)")]
    BadPatch {
        got: usize,
        want: usize,
        w: u32,
        h: u32,
    },
    #[error("encoder size '{0}' is not of the form HEIGHTxWIDTH, e.g. 64x32")]
    BadEncoderSize(String),
}

/// 128-dimensional appearance descriptor, unit L2 norm within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: [f64; DESCRIPTOR_DIM],
}

impl Descriptor {
    /// Accepts a vector that is already unit norm (within tolerance).
    pub fn new(values: [f64; DESCRIPTOR_DIM]) -> Result<Self, AppearanceError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AppearanceError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(AppearanceError::NotUnitNorm(norm));
        }
        Ok(Self { values })
    }

    /// Normalizes an arbitrary non-zero vector. Used wherever descriptors
    /// enter from outside (sidecar files, encoders) so downstream code can
    /// rely on the unit-norm invariant.
    pub fn from_unnormalized(values: &[f64]) -> Result<Self, AppearanceError> {
        if values.len() != DESCRIPTOR_DIM {
            return Err(AppearanceError::WrongDimension(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AppearanceError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(AppearanceError::ZeroNorm);
        }
        let mut out = [0.0; DESCRIPTOR_DIM];
        for (o, v) in out.iter_mut().zip(values) {
            *o = v / norm;
        }
        Ok(Self { values: out })
    }

    /// Standard basis vector e_i. Handy for synthetic targets whose
    /// descriptors must be exactly orthogonal.
    pub fn basis(i: usize) -> Self {
        let mut values = [0.0; DESCRIPTOR_DIM];
        values[i % DESCRIPTOR_DIM] = 1.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64; DESCRIPTOR_DIM] {
        &self.values
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Cosine distance `1 − aᵀb` between unit descriptors: 0 for identical,
/// 1 for orthogonal, at most 2 for opposite vectors.
pub fn cosine_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    1.0 - a.dot(b)
}

/// Bounded FIFO of the descriptors most recently associated with a track.
#[derive(Debug, Clone)]
pub struct Gallery {
    items: VecDeque<Descriptor>,
    capacity: usize,
}

impl Gallery {
    pub fn new(capacity: usize) -> Result<Self, AppearanceError> {
        if capacity == 0 {
            return Err(AppearanceError::ZeroCapacity);
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    /// Appends a descriptor, evicting the oldest once at capacity.
    pub fn push(&mut self, descriptor: Descriptor) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(descriptor);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Smallest cosine distance between `query` and any gallery member.
    pub fn min_cosine_distance(&self, query: &Descriptor) -> Result<f64, AppearanceError> {
        self.items
            .iter()
            .map(|d| cosine_distance(d, query))
            .min_by(|a, b| a.partial_cmp(b).expect("distances are finite"))
            .ok_or(AppearanceError::EmptyGallery)
    }
}

/// Raw RGB8 pixel patch, row-major, used as encoder input.
#[derive(Debug, Clone)]
pub struct Patch {
    width: u32,
    height: u32,
    rgb: Vec<u8>,
}

impl Patch {
    pub fn new(width: u32, height: u32, rgb: Vec<u8>) -> Result<Self, AppearanceError> {
        let want = width as usize * height as usize * 3;
        if width == 0 || height == 0 || rgb.len() != want {
            return Err(AppearanceError::BadPatch {
                got: rgb.len(),
                want,
                w: width,
                h: height,
            });
        }
        Ok(Self { width, height, rgb })
    }

    fn pixel(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.rgb[i], self.rgb[i + 1], self.rgb[i + 2])
    }
}

/// Name plus working resolution of a registered encoder. The size string
/// is `HEIGHTxWIDTH` (person crops are taller than wide, e.g. `64x32`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub name: String,
    pub height: u32,
    pub width: u32,
}

impl EncoderSpec {
    pub fn histogram(height: u32, width: u32) -> Self {
        Self {
            name: "histogram".into(),
            height,
            width,
        }
    }

    /// Parses `"64x32"` into height 64, width 32.
    pub fn parse_size(s: &str) -> Result<(u32, u32), AppearanceError> {
        let bad = || AppearanceError::BadEncoderSize(s.to_string());
        let (h, w) = s.split_once('x').ok_or_else(bad)?;
        let h: u32 = h.trim().parse().map_err(|_| bad())?;
        let w: u32 = w.trim().parse().map_err(|_| bad())?;
        if h == 0 || w == 0 {
            return Err(bad());
        }
        Ok((h, w))
    }

    pub fn size_label(&self) -> String {
        format!("{}x{}", self.height, self.width)
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::histogram(64, 32)
    }
}

const GRID_ROWS: u32 = 4;
const GRID_COLS: u32 = 2;
const BINS: usize = 8;

/// Encodes a pixel patch into a unit descriptor with the encoder named by
/// `spec`. The patch is resampled (nearest neighbor) to the encoder's working
/// resolution first, so descriptors are comparable across source patch
/// sizes. Only the `histogram` encoder is registered.
pub fn encode(patch: &Patch, spec: &EncoderSpec) -> Result<Descriptor, AppearanceError> {
    if spec.name != "histogram" {
        return Err(AppearanceError::UnknownEncoder(spec.name.clone()));
    }
    let mut acc = [0.0f64; DESCRIPTOR_DIM];
    for ty in 0..spec.height {
        // Nearest-neighbor source row/column; integer math keeps this exact.
        let sy = (ty as u64 * patch.height as u64 / spec.height as u64) as u32;
        let row = ty * GRID_ROWS / spec.height;
        for tx in 0..spec.width {
            let sx = (tx as u64 * patch.width as u64 / spec.width as u64) as u32;
            let col = tx * GRID_COLS / spec.width;
            let (r, g, b) = patch.pixel(sx, sy);
            let cell = (row * GRID_COLS + col) as usize;
            let base = cell * 2 * BINS;
            acc[base + hue_bin(r, g, b)] += 1.0;
            acc[base + BINS + intensity_bin(r, g, b)] += 1.0;
        }
    }
    // Every pixel lands in exactly two bins, so the accumulator is nonzero.
    Descriptor::from_unnormalized(&acc)
}

/// Hue-like channel: hue angle scaled to [0, 1), 0 for achromatic pixels.
fn hue_bin(r: u8, g: u8, b: u8) -> usize {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max == min {
        return 0;
    }
    let d = max - min;
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    let scaled = h / 6.0; // [0, 1)
    ((scaled * BINS as f64) as usize).min(BINS - 1)
}

/// Intensity-like channel: mean of the three components over [0, 1].
fn intensity_bin(r: u8, g: u8, b: u8) -> usize {
    let i = (r as f64 + g as f64 + b as f64) / (3.0 * 255.0);
    ((i * BINS as f64) as usize).min(BINS - 1)
}
