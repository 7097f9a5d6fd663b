//! Grid sampling, rendering and ground-truth decoding.
//!
//! Cells are tiled with floor arithmetic so that every `n` in `1..=image_size`
//! covers the image exactly; widths differ by at most one pixel when
//! `image_size` is not divisible by `n`. No gridlines are drawn.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ColorMatrix;
use crate::splitmix::SplitMix64;

pub const DEFAULT_IMAGE_SIZE: u32 = 512;
pub const MAX_COLORS: usize = 10;
/// Minimum channel-wise L∞ distance between any two palette colors.
pub const MIN_COLOR_DISTANCE: u8 = 64;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("cell index {index} out of range for a grid of {n}")]
    OutOfRange { index: usize, n: usize },
    #[error("matrix entry {value} at ({row}, {col}) is not a palette index (palette has {len} colors)")]
    InvalidIndex {
        row: usize,
        col: usize,
        value: u8,
        len: usize,
    },
    #[error("cell ({row}, {col}) has color {rgb:?} which is not in the palette")]
    Decode { row: usize, col: usize, rgb: [u8; 3] },
    #[error("image must be square RGB, got {width}x{height}")]
    ImageShape { width: u32, height: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub name: String,
    pub rgb: [u8; 3],
}

/// Ordered color dictionary; an entry's position is its integer label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PaletteEntry>", into = "Vec<PaletteEntry>")]
pub struct Palette {
    entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn new(entries: Vec<PaletteEntry>) -> Result<Self, GridError> {
        if entries.is_empty() || entries.len() > MAX_COLORS {
            return Err(GridError::InvalidPalette(format!(
                "expected 1..={MAX_COLORS} entries, got {}",
                entries.len()
            )));
        }
        for (i, a) in entries.iter().enumerate() {
            for b in &entries[i + 1..] {
                if a.name == b.name {
                    return Err(GridError::InvalidPalette(format!("duplicate name {}", a.name)));
                }
                let dist = a
                    .rgb
                    .iter()
                    .zip(b.rgb)
                    .map(|(&x, y)| x.abs_diff(y))
                    .max()
                    .unwrap_or(0);
                if dist < MIN_COLOR_DISTANCE {
                    return Err(GridError::InvalidPalette(format!(
                        "{} and {} are too close (L-inf distance {dist})",
                        a.name, b.name
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// White, Red, Blue, Green, Yellow, Orange, Purple, Cyan, Magenta, Black.
    pub fn canonical() -> Self {
        const COLORS: [(&str, [u8; 3]); MAX_COLORS] = [
            ("White", [255, 255, 255]),
            ("Red", [255, 0, 0]),
            ("Blue", [0, 0, 255]),
            ("Green", [0, 128, 0]),
            ("Yellow", [255, 255, 0]),
            ("Orange", [255, 165, 0]),
            ("Purple", [128, 0, 128]),
            ("Cyan", [0, 255, 255]),
            ("Magenta", [255, 0, 255]),
            ("Black", [0, 0, 0]),
        ];
        let entries = COLORS
            .iter()
            .map(|&(name, rgb)| PaletteEntry {
                name: name.to_string(),
                rgb,
            })
            .collect();
        Self::new(entries).expect("canonical palette is valid")
    }

    /// The first `c` entries.
    pub fn truncated(&self, c: usize) -> Result<Self, GridError> {
        if c == 0 || c > self.len() {
            return Err(GridError::InvalidSpec(format!(
                "cannot take {c} colors from a palette of {}",
                self.len()
            )));
        }
        Ok(Self {
            entries: self.entries[..c].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn rgb(&self, index: u8) -> Option<[u8; 3]> {
        self.entries.get(usize::from(index)).map(|e| e.rgb)
    }

    pub fn name(&self, index: u8) -> Option<&str> {
        self.entries.get(usize::from(index)).map(|e| e.name.as_str())
    }

    pub fn index_of(&self, rgb: [u8; 3]) -> Option<u8> {
        self.entries.iter().position(|e| e.rgb == rgb).map(|i| i as u8)
    }
}

impl Default for Palette {
    fn default() -> Self {
        Self::canonical()
    }
}

impl TryFrom<Vec<PaletteEntry>> for Palette {
    type Error = GridError;

    fn try_from(entries: Vec<PaletteEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<Palette> for Vec<PaletteEntry> {
    fn from(p: Palette) -> Self {
        p.entries
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub c: usize,
    pub image_size: u32,
    pub palette: Palette,
}

impl GridSpec {
    pub fn new(n: usize, c: usize) -> Result<Self, GridError> {
        Self::with_image_size(n, c, DEFAULT_IMAGE_SIZE)
    }

    pub fn with_image_size(n: usize, c: usize, image_size: u32) -> Result<Self, GridError> {
        let spec = Self {
            n,
            c,
            image_size,
            palette: Palette::canonical(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.image_size == 0 {
            return Err(GridError::InvalidSpec("image_size must be positive".into()));
        }
        if self.n == 0 || self.n > self.image_size as usize {
            return Err(GridError::InvalidSpec(format!(
                "n = {} must be in 1..={}",
                self.n, self.image_size
            )));
        }
        if self.c == 0 || self.c > self.palette.len() {
            return Err(GridError::InvalidSpec(format!(
                "c = {} must be in 1..={}",
                self.c,
                self.palette.len()
            )));
        }
        Ok(())
    }

    /// Palette restricted to the colors this grid may use.
    pub fn active_palette(&self) -> Palette {
        self.palette.truncated(self.c).expect("validated spec")
    }
}

/// A sampled grid together with its rendering.
#[derive(Debug, Clone)]
pub struct GridInstance {
    pub spec: GridSpec,
    pub seed: u64,
    pub matrix: ColorMatrix,
    pub image: RgbImage,
}

impl GridInstance {
    pub fn generate(spec: GridSpec, seed: u64) -> Result<Self, GridError> {
        spec.validate()?;
        let matrix = sample_matrix(seed, spec.n, spec.c)?;
        let image = render(&matrix, &spec.palette, spec.image_size)?;
        Ok(Self {
            spec,
            seed,
            matrix,
            image,
        })
    }
}

/// Square 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    size: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(size: u32, fill: [u8; 3]) -> Self {
        let pixels = size as usize * size as usize;
        Self {
            size,
            data: fill.repeat(pixels),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.size as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.size as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, GridError> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.size, self.size);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.data)?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), GridError> {
        let file = BufWriter::new(File::create(path)?);
        let mut encoder = png::Encoder::new(file, self.size, self.size);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.data)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, GridError> {
        let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf)?;
        if info.width != info.height
            || info.color_type != png::ColorType::Rgb
            || info.bit_depth != png::BitDepth::Eight
        {
            return Err(GridError::ImageShape {
                width: info.width,
                height: info.height,
            });
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            size: info.width,
            data: buf,
        })
    }
}

/// Samples an `n x n` matrix of independent uniform draws over `[0, c)`,
/// consuming the SplitMix64 stream for `seed` in row-major order.
pub fn sample_matrix(seed: u64, n: usize, c: usize) -> Result<ColorMatrix, GridError> {
    if n == 0 || c == 0 || c > MAX_COLORS {
        return Err(GridError::InvalidSpec(format!(
            "need n >= 1 and 1 <= c <= {MAX_COLORS}, got n = {n}, c = {c}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let data = (0..n * n).map(|_| rng.next_below(c as u64) as u8).collect();
    Ok(ColorMatrix::from_flat(n, n, data).expect("n * n entries"))
}

/// Half-open pixel interval `[floor(i*S/n), floor((i+1)*S/n))` covered by cell `index`.
pub fn cell_bounds(index: usize, n: usize, image_size: u32) -> Result<Range<u32>, GridError> {
    if index >= n {
        return Err(GridError::OutOfRange { index, n });
    }
    let size = u64::from(image_size);
    let (i, n) = (index as u64, n as u64);
    Ok((i * size / n) as u32..((i + 1) * size / n) as u32)
}

pub fn render(matrix: &ColorMatrix, palette: &Palette, image_size: u32) -> Result<RgbImage, GridError> {
    let n = matrix.rows();
    if n != matrix.cols() || n == 0 || n > image_size as usize {
        return Err(GridError::InvalidSpec(format!(
            "cannot render a {}x{} matrix at {image_size} px",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let size = image_size as usize;
    let mut data = vec![0u8; 3 * size * size];
    let mut scanline = vec![0u8; 3 * size];
    for row in 0..n {
        for col in 0..n {
            let value = matrix.get(row, col);
            let rgb = palette.rgb(value).ok_or(GridError::InvalidIndex {
                row,
                col,
                value,
                len: palette.len(),
            })?;
            let xs = cell_bounds(col, n, image_size)?;
            for x in xs {
                scanline[3 * x as usize..3 * x as usize + 3].copy_from_slice(&rgb);
            }
        }
        for y in cell_bounds(row, n, image_size)? {
            let start = 3 * y as usize * size;
            data[start..start + 3 * size].copy_from_slice(&scanline);
        }
    }
    Ok(RgbImage {
        size: image_size,
        data,
    })
}

/// Reads each cell's midpoint pixel and maps it back through the palette.
pub fn decode_image(image: &RgbImage, palette: &Palette, n: usize) -> Result<ColorMatrix, GridError> {
    if n == 0 || n > image.size() as usize {
        return Err(GridError::InvalidSpec(format!(
            "cannot decode {n} cells from a {} px image",
            image.size()
        )));
    }
    let mids = (0..n)
        .map(|i| cell_bounds(i, n, image.size()).map(|r| (r.start + r.end) / 2))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = ColorMatrix::filled(n, n, 0);
    for (row, &y) in mids.iter().enumerate() {
        for (col, &x) in mids.iter().enumerate() {
            let rgb = image.pixel(x, y);
            let index = palette.index_of(rgb).ok_or(GridError::Decode { row, col, rgb })?;
            out.set(row, col, index);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_3x3() -> ColorMatrix {
        ColorMatrix::from_rows(&[vec![0, 1, 1], vec![1, 2, 1], vec![2, 0, 0]]).unwrap()
    }

    #[test]
    fn single_color_forces_zero() {
        let m = sample_matrix(7, 2, 1).unwrap();
        assert_eq!(m.to_rows(), vec![vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let seed = 0xDEAD_BEEF;
        assert_eq!(sample_matrix(seed, 12, 3).unwrap(), sample_matrix(seed, 12, 3).unwrap());
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(matches!(sample_matrix(1, 0, 3), Err(GridError::InvalidSpec(_))));
        assert!(matches!(sample_matrix(1, 3, 0), Err(GridError::InvalidSpec(_))));
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(cell_bounds(0, 1, 512).unwrap(), 0..512);
        assert_eq!(cell_bounds(0, 9, 512).unwrap(), 0..56);
        assert_eq!(cell_bounds(8, 9, 512).unwrap(), 455..512);
        assert_eq!(cell_bounds(1, 32, 512).unwrap(), 16..32);
        assert!(matches!(cell_bounds(9, 9, 512), Err(GridError::OutOfRange { .. })));
    }

    #[test]
    fn bounds_match_pixel_tiling_oracle() {
        // Brute force: pixel x belongs to the last cell i with i*S/n < x + 1.
        for size in [448u32, 512, 97] {
            for n in 1..=size.min(130) as usize {
                let mut owner = vec![usize::MAX; size as usize];
                for x in 0..size as usize {
                    owner[x] = (0..n).rev().find(|&i| i * (size as usize) < (x + 1) * n).unwrap();
                }
                for i in 0..n {
                    let r = cell_bounds(i, n, size).unwrap();
                    let expect: Vec<u32> = (0..size).filter(|&x| owner[x as usize] == i).collect();
                    assert_eq!(r.clone().collect::<Vec<_>>(), expect, "n={n} i={i} size={size}");
                }
            }
        }
    }

    #[test]
    fn constant_fill() {
        let palette = Palette::canonical();
        let img = render(&ColorMatrix::filled(1, 1, 0), &palette, 8).unwrap();
        assert!(img.as_bytes().iter().all(|&b| b == 255));
        assert_eq!(img.as_bytes().len(), 64 * 3);
    }

    #[test]
    fn example_3x3_round_trips() {
        let palette = Palette::canonical().truncated(3).unwrap();
        assert_eq!(palette.name(0), Some("White"));
        assert_eq!(palette.name(1), Some("Red"));
        assert_eq!(palette.name(2), Some("Blue"));
        let img = render(&example_3x3(), &palette, 512).unwrap();
        assert_eq!(decode_image(&img, &palette, 3).unwrap(), example_3x3());
    }

    #[test]
    fn every_cell_pixel_has_cell_color() {
        let palette = Palette::canonical();
        let m = sample_matrix(5, 9, 10).unwrap();
        let img = render(&m, &palette, 512).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let rgb = palette.rgb(m.get(r, c)).unwrap();
                for y in cell_bounds(r, 9, 512).unwrap() {
                    for x in cell_bounds(c, 9, 512).unwrap() {
                        assert_eq!(img.pixel(x, y), rgb);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_index_rejected() {
        let palette = Palette::canonical().truncated(2).unwrap();
        let m = ColorMatrix::filled(2, 2, 5);
        assert!(matches!(render(&m, &palette, 16), Err(GridError::InvalidIndex { .. })));
    }

    #[test]
    fn black_image_fails_to_decode() {
        let palette = Palette::canonical().truncated(3).unwrap();
        let img = RgbImage::new(16, [0, 0, 0]);
        match decode_image(&img, &palette, 4) {
            Err(GridError::Decode { row: 0, col: 0, rgb }) => assert_eq!(rgb, [0, 0, 0]),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn palette_invariants_enforced() {
        let close = vec![
            PaletteEntry { name: "A".into(), rgb: [0, 0, 0] },
            PaletteEntry { name: "B".into(), rgb: [10, 20, 30] },
        ];
        assert!(Palette::new(close).is_err());
        let dup = vec![
            PaletteEntry { name: "A".into(), rgb: [0, 0, 0] },
            PaletteEntry { name: "A".into(), rgb: [255, 255, 255] },
        ];
        assert!(Palette::new(dup).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let palette = Palette::canonical();
        let img = render(&sample_matrix(3, 7, 10).unwrap(), &palette, 64).unwrap();
        img.save_png(&path).unwrap();
        assert_eq!(RgbImage::load_png(&path).unwrap(), img);
        assert_eq!(std::fs::read(&path).unwrap(), img.encode_png().unwrap());
    }

    #[test]
    fn color_frequencies_are_uniform() {
        let mut counts = [0usize; 3];
        let mut total = 0;
        for seed in 0..100u64 {
            for &v in sample_matrix(seed, 32, 3).unwrap().as_slice() {
                counts[v as usize] += 1;
                total += 1;
            }
        }
        assert!(total >= 100_000);
        for count in counts {
            let freq = count as f64 / total as f64;
            assert!((freq - 1.0 / 3.0).abs() <= 0.01, "frequency {freq}");
        }
    }

    proptest! {
        #[test]
        fn tiling_is_exact(n in 1usize..=512, size in prop::sample::select(vec![448u32, 512])) {
            prop_assume!(n <= size as usize);
            let mut next = 0;
            for i in 0..n {
                let r = cell_bounds(i, n, size).unwrap();
                prop_assert_eq!(r.start, next);
                prop_assert!(r.end > r.start);
                next = r.end;
            }
            prop_assert_eq!(next, size);
        }

        #[test]
        fn render_decode_identity(seed in any::<u64>(), n in 1usize..=64, c in 1usize..=10) {
            let palette = Palette::canonical();
            let m = sample_matrix(seed, n, c).unwrap();
            let img = render(&m, &palette, 512).unwrap();
            prop_assert_eq!(decode_image(&img, &palette, n).unwrap(), m);
        }
    }
}
