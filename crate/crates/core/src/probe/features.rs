//! Frozen-encoder feature maps: file I/O, token-grid reshaping, bilinear
//! resampling and a synthetic stand-in encoder.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::g2mf::{FormatError, Tensor};
use super::ProbeError;
use crate::grid;
use crate::matrix::ColorMatrix;

/// Channels-first `d x h x w` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    d: usize,
    h: usize,
    w: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(d: usize, h: usize, w: usize, values: Vec<f32>) -> Result<Self, ProbeError> {
        if values.len() != d * h * w {
            return Err(ProbeError::Shape(format!(
                "{} values cannot fill {d}x{h}x{w}",
                values.len()
            )));
        }
        Ok(Self { d, h, w, values })
    }

    pub fn zeros(d: usize, h: usize, w: usize) -> Self {
        Self {
            d,
            h,
            w,
            values: vec![0.0; d * h * w],
        }
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, ch: usize, y: usize, x: usize) -> f32 {
        self.values[(ch * self.h + y) * self.w + x]
    }

    fn plane(&self, ch: usize) -> &[f32] {
        &self.values[ch * self.h * self.w..(ch + 1) * self.h * self.w]
    }

    /// Row-major `(h*w) x d` copy: one row per spatial position.
    pub fn to_positions(&self) -> Vec<f32> {
        let positions = self.h * self.w;
        let mut out = vec![0.0; positions * self.d];
        for ch in 0..self.d {
            for (p, &v) in self.plane(ch).iter().enumerate() {
                out[p * self.d + ch] = v;
            }
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.d, self.h, self.w], self.values.clone()).expect("consistent dims")
    }
}

/// `L x D` encoder output sequence, row-major by token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    len: usize,
    dim: usize,
    values: Vec<f32>,
}

impl TokenSequence {
    pub fn new(len: usize, dim: usize, values: Vec<f32>) -> Result<Self, ProbeError> {
        if values.len() != len * dim {
            return Err(ProbeError::Shape(format!(
                "{} values cannot fill {len} tokens of width {dim}",
                values.len()
            )));
        }
        Ok(Self { len, dim, values })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.len, self.dim], self.values.clone()).expect("consistent dims")
    }
}

/// Contents of a feature file: a raw token sequence (rank 2) or an already
/// spatial map (rank 3).
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Sequence(TokenSequence),
    Map(FeatureMap),
}

impl Features {
    /// Converts to a spatial map, dropping `drop_leading` tokens from sequences.
    pub fn into_map(self, drop_leading: usize) -> Result<FeatureMap, ProbeError> {
        match self {
            Features::Sequence(seq) => reshape_grid(&seq, drop_leading),
            Features::Map(map) => Ok(map),
        }
    }
}

pub fn load_features(path: &Path) -> Result<Features, ProbeError> {
    let tensor = Tensor::load(path)?;
    from_tensor(tensor)
}

pub fn from_tensor(tensor: Tensor) -> Result<Features, ProbeError> {
    match *tensor.dims() {
        [len, dim] => Ok(Features::Sequence(TokenSequence::new(len, dim, tensor.into_data())?)),
        [d, h, w] => Ok(Features::Map(FeatureMap::new(d, h, w, tensor.into_data())?)),
        _ => Err(ProbeError::Format(FormatError::Shape {
            values: tensor.data().len(),
            dims: tensor.dims().to_vec(),
        })),
    }
}

/// Drops `drop_leading` tokens and lays the rest out as a square channels-first grid.
pub fn reshape_grid(seq: &TokenSequence, drop_leading: usize) -> Result<FeatureMap, ProbeError> {
    let remaining = seq.len.checked_sub(drop_leading).ok_or_else(|| {
        ProbeError::Shape(format!("cannot drop {drop_leading} of {} tokens", seq.len))
    })?;
    let side = (remaining as f64).sqrt().round() as usize;
    if side * side != remaining || remaining == 0 {
        return Err(ProbeError::Shape(format!(
            "{remaining} tokens after dropping {drop_leading} do not form a square grid"
        )));
    }
    let d = seq.dim;
    let mut values = vec![0.0; remaining * d];
    for token in 0..remaining {
        let src = &seq.values[(drop_leading + token) * d..(drop_leading + token + 1) * d];
        for (ch, &v) in src.iter().enumerate() {
            values[ch * remaining + token] = v;
        }
    }
    FeatureMap::new(d, side, side, values)
}

/// Source index pair and blend weight for output index `i` when resampling
/// `src` samples to `dst` samples with half-pixel centers.
fn sample_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Bilinear resize to `n x n` (half-pixel centers, clamped at the edges).
pub fn interpolate(fm: &FeatureMap, n: usize) -> FeatureMap {
    if fm.h == n && fm.w == n {
        return fm.clone();
    }
    let ys: Vec<_> = (0..n).map(|i| sample_coord(i, fm.h, n)).collect();
    let xs: Vec<_> = (0..n).map(|j| sample_coord(j, fm.w, n)).collect();
    let mut out = Vec::with_capacity(fm.d * n * n);
    for ch in 0..fm.d {
        let plane = fm.plane(ch);
        let at = |y: usize, x: usize| f64::from(plane[y * fm.w + x]);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    FeatureMap {
        d: fm.d,
        h: n,
        w: n,
        values: out,
    }
}

pub const SYNTHETIC_IMAGE_SIZE: u32 = 512;
pub const SYNTHETIC_PATCH: u32 = 16;
pub const SYNTHETIC_COLOR_CHANNELS: usize = 10;

/// Desk-scale oracle encoder: each 16 px patch of the 512 px rendering gets
/// the pixel-weighted mean one-hot color in channels `0..10`, plus iid
/// Gaussian noise of scale `noise_sigma` in all `d` channels.
pub fn synthetic_features(
    matrix: &ColorMatrix,
    noise_sigma: f32,
    d: usize,
    seed: u64,
) -> Result<FeatureMap, ProbeError> {
    let n = matrix.rows();
    if d < SYNTHETIC_COLOR_CHANNELS {
        return Err(ProbeError::Shape(format!("synthetic features need d >= 10, got {d}")));
    }
    if n == 0 || n != matrix.cols() || n > SYNTHETIC_IMAGE_SIZE as usize {
        return Err(ProbeError::Shape(format!("unsupported matrix {:?}", matrix.shape())));
    }
    if matrix.as_slice().iter().any(|&v| usize::from(v) >= SYNTHETIC_COLOR_CHANNELS) {
        return Err(ProbeError::Shape("color index beyond 10 channels".into()));
    }
    let side = (SYNTHETIC_IMAGE_SIZE / SYNTHETIC_PATCH) as usize;
    let bounds: Vec<_> = (0..n)
        .map(|i| grid::cell_bounds(i, n, SYNTHETIC_IMAGE_SIZE).expect("index < n"))
        .collect();
    // overlaps[p] lists (cell, pixels) for patch index p along one axis.
    let overlaps: Vec<Vec<(usize, u32)>> = (0..side as u32)
        .map(|p| {
            let (lo, hi) = (p * SYNTHETIC_PATCH, (p + 1) * SYNTHETIC_PATCH);
            bounds
                .iter()
                .enumerate()
                .filter_map(|(i, b)| {
                    let ov = hi.min(b.end).saturating_sub(lo.max(b.start));
                    (ov > 0).then_some((i, ov))
                })
                .collect()
        })
        .collect();
    let patch_area = f64::from(SYNTHETIC_PATCH * SYNTHETIC_PATCH);
    let mut values = vec![0.0f32; d * side * side];
    for py in 0..side {
        for px in 0..side {
            let mut mix = [0.0f64; SYNTHETIC_COLOR_CHANNELS];
            for &(row, oy) in &overlaps[py] {
                for &(col, ox) in &overlaps[px] {
                    mix[usize::from(matrix.get(row, col))] += f64::from(oy * ox) / patch_area;
                }
            }
            for (ch, &m) in mix.iter().enumerate() {
                values[(ch * side + py) * side + px] = m as f32;
            }
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, noise_sigma)
            .map_err(|e| ProbeError::Shape(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    FeatureMap::new(d, side, side, values)
}
