//! Cell-versus-patch boundary classification.
//!
//! Along one axis a cell's pixel interval is `Interior` to a patch, touches a
//! patch boundary (`Edge`), or is split by one (`Cross`). Image borders count
//! as boundaries. The unordered pair of the two axis classes gives one of six
//! interaction types.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, GridError};
use crate::metrics::AccuracyGrid;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("patch length {patch_len} must divide image size {image_size}")]
    Indivisible { image_size: u32, patch_len: u32 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub image_size: u32,
    pub patch_len: u32,
}

impl PatchConfig {
    pub fn new(image_size: u32, patch_len: u32) -> Result<Self, GeometryError> {
        if patch_len == 0 || image_size == 0 || image_size % patch_len != 0 {
            return Err(GeometryError::Indivisible { image_size, patch_len });
        }
        Ok(Self { image_size, patch_len })
    }

    /// 512 px images with 16 px patches.
    pub fn merger_style() -> Self {
        Self {
            image_size: 512,
            patch_len: 16,
        }
    }

    /// 448 px images with 14 px patches.
    pub fn pixel_shuffle_style() -> Self {
        Self {
            image_size: 448,
            patch_len: 14,
        }
    }

    pub fn patches_per_side(&self) -> u32 {
        self.image_size / self.patch_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxisClass {
    Interior,
    Edge,
    Cross,
}

impl AxisClass {
    fn short(self) -> &'static str {
        match self {
            AxisClass::Interior => "Int",
            AxisClass::Edge => "Edg",
            AxisClass::Cross => "Cro",
        }
    }
}

pub fn axis_class(interval: Range<u32>, patch_len: u32) -> AxisClass {
    let (a, b) = (interval.start, interval.end);
    let next_boundary = (a / patch_len + 1) * patch_len;
    if next_boundary < b {
        AxisClass::Cross
    } else if a % patch_len == 0 || b % patch_len == 0 {
        AxisClass::Edge
    } else {
        AxisClass::Interior
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InteractionType {
    #[serde(rename = "Int-Int")]
    IntInt,
    #[serde(rename = "Int-Edg")]
    IntEdg,
    #[serde(rename = "Int-Cro")]
    IntCro,
    #[serde(rename = "Edg-Edg")]
    EdgEdg,
    #[serde(rename = "Edg-Cro")]
    EdgCro,
    #[serde(rename = "Cro-Cro")]
    CroCro,
}

impl InteractionType {
    pub const ALL: [InteractionType; 6] = [
        InteractionType::IntInt,
        InteractionType::IntEdg,
        InteractionType::IntCro,
        InteractionType::EdgEdg,
        InteractionType::EdgCro,
        InteractionType::CroCro,
    ];

    pub fn from_axes(a: AxisClass, b: AxisClass) -> Self {
        use AxisClass::*;
        match if a <= b { (a, b) } else { (b, a) } {
            (Interior, Interior) => InteractionType::IntInt,
            (Interior, Edge) => InteractionType::IntEdg,
            (Interior, Cross) => InteractionType::IntCro,
            (Edge, Edge) => InteractionType::EdgEdg,
            (Edge, Cross) => InteractionType::EdgCro,
            (Cross, Cross) => InteractionType::CroCro,
            _ => unreachable!("pair is sorted"),
        }
    }

    pub fn axes(self) -> (AxisClass, AxisClass) {
        use AxisClass::*;
        match self {
            InteractionType::IntInt => (Interior, Interior),
            InteractionType::IntEdg => (Interior, Edge),
            InteractionType::IntCro => (Interior, Cross),
            InteractionType::EdgEdg => (Edge, Edge),
            InteractionType::EdgCro => (Edge, Cross),
            InteractionType::CroCro => (Cross, Cross),
        }
    }

    pub fn label(self) -> String {
        let (a, b) = self.axes();
        format!("{}-{}", a.short(), b.short())
    }
}

impl fmt::Display for InteractionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn cell_interaction(row: usize, col: usize, n: usize, patch: PatchConfig) -> Result<InteractionType, GeometryError> {
    let ys = grid::cell_bounds(row, n, patch.image_size)?;
    let xs = grid::cell_bounds(col, n, patch.image_size)?;
    Ok(InteractionType::from_axes(
        axis_class(ys, patch.patch_len),
        axis_class(xs, patch.patch_len),
    ))
}

/// Largest overlap between one patch and one axis interval, in pixels.
fn max_axis_overlap(interval: &Range<u32>, patch_len: u32) -> u32 {
    let first = interval.start / patch_len;
    let last = (interval.end - 1) / patch_len;
    (first..=last)
        .map(|p| {
            let lo = interval.start.max(p * patch_len);
            let hi = interval.end.min((p + 1) * patch_len);
            hi - lo
        })
        .max()
        .unwrap_or(0)
}

/// Fraction of the cell's area covered by the single patch that covers most of it.
pub fn area_dominance(row: usize, col: usize, n: usize, patch: PatchConfig) -> Result<f64, GeometryError> {
    let ys = grid::cell_bounds(row, n, patch.image_size)?;
    let xs = grid::cell_bounds(col, n, patch.image_size)?;
    Ok(area_dominance_of(&ys, &xs, patch.patch_len))
}

/// [`area_dominance`] for an arbitrary pixel rectangle.
pub fn area_dominance_of(ys: &Range<u32>, xs: &Range<u32>, patch_len: u32) -> f64 {
    let best = u64::from(max_axis_overlap(ys, patch_len)) * u64::from(max_axis_overlap(xs, patch_len));
    let area = u64::from(ys.end - ys.start) * u64::from(xs.end - xs.start);
    best as f64 / area as f64
}

/// Cell counts per interaction type, in the fixed six-type order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeHistogram(pub BTreeMap<InteractionType, u64>);

impl TypeHistogram {
    pub fn get(&self, ty: InteractionType) -> u64 {
        self.0.get(&ty).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

pub fn type_distribution(n: usize, patch: PatchConfig) -> Result<TypeHistogram, GeometryError> {
    let classes = axis_classes(n, patch)?;
    let mut hist: BTreeMap<InteractionType, u64> = InteractionType::ALL.iter().map(|&t| (t, 0)).collect();
    for &a in &classes {
        for &b in &classes {
            *hist.entry(InteractionType::from_axes(a, b)).or_default() += 1;
        }
    }
    Ok(TypeHistogram(hist))
}

fn axis_classes(n: usize, patch: PatchConfig) -> Result<Vec<AxisClass>, GeometryError> {
    (0..n)
        .map(|i| Ok(axis_class(grid::cell_bounds(i, n, patch.image_size)?, patch.patch_len)))
        .collect()
}

/// Every cell's interaction type, row-major.
pub fn classify_cells(n: usize, patch: PatchConfig) -> Result<Vec<InteractionType>, GeometryError> {
    let classes = axis_classes(n, patch)?;
    Ok(classes
        .iter()
        .flat_map(|&a| classes.iter().map(move |&b| InteractionType::from_axes(a, b)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub cells: u64,
    pub mean_accuracy: f64,
}

/// Mean per-cell accuracy grouped by interaction type. Types without any
/// evaluated cells are omitted.
pub fn accuracy_by_type(
    acc: &AccuracyGrid,
    patch: PatchConfig,
) -> Result<BTreeMap<InteractionType, TypeAccuracy>, GeometryError> {
    let n = acc.n();
    let types = classify_cells(n, patch)?;
    let mut sums: BTreeMap<InteractionType, (u64, f64)> = BTreeMap::new();
    for (i, ty) in types.into_iter().enumerate() {
        if let Some(a) = acc.accuracy(i / n, i % n) {
            let entry = sums.entry(ty).or_default();
            entry.0 += 1;
            entry.1 += a;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(ty, (cells, sum))| {
            (
                ty,
                TypeAccuracy {
                    cells,
                    mean_accuracy: sum / cells as f64,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_examples() {
        assert_eq!(axis_class(16..32, 16), AxisClass::Edge);
        assert_eq!(axis_class(10..21, 16), AxisClass::Cross);
        assert_eq!(axis_class(17..23, 16), AxisClass::Interior);
        assert_eq!(axis_class(0..10, 16), AxisClass::Edge);
        assert_eq!(axis_class(10..16, 16), AxisClass::Edge);
    }

    #[test]
    fn aligned_grids_are_all_edge_edge() {
        let cfg = PatchConfig::merger_style();
        for n in [32, 64] {
            let hist = type_distribution(n, cfg).unwrap();
            assert_eq!(hist.get(InteractionType::EdgEdg), (n * n) as u64);
            assert_eq!(hist.total(), (n * n) as u64);
            assert_eq!(cell_interaction(n / 2, 3, n, cfg).unwrap(), InteractionType::EdgEdg);
        }
    }

    #[test]
    fn n48_distribution() {
        let hist = type_distribution(48, PatchConfig::merger_style()).unwrap();
        assert_eq!(hist.get(InteractionType::EdgEdg), 2304 * 4 / 9);
        assert_eq!(hist.get(InteractionType::EdgCro), 2304 * 4 / 9);
        assert_eq!(hist.get(InteractionType::CroCro), 2304 / 9);
        for ty in [InteractionType::IntInt, InteractionType::IntEdg, InteractionType::IntCro] {
            assert_eq!(hist.get(ty), 0);
        }
    }

    #[test]
    fn dominance_examples() {
        let cfg = PatchConfig::merger_style();
        assert_eq!(area_dominance(5, 7, 32, cfg).unwrap(), 1.0);
        assert_eq!(area_dominance(5, 7, 64, cfg).unwrap(), 1.0);
        assert_eq!(area_dominance_of(&(10..21), &(10..21), 16), 36.0 / 121.0);
    }

    #[test]
    fn labels() {
        let labels: Vec<String> = InteractionType::ALL.iter().map(|t| t.label()).collect();
        assert_eq!(labels, ["Int-Int", "Int-Edg", "Int-Cro", "Edg-Edg", "Edg-Cro", "Cro-Cro"]);
        assert_eq!(serde_json::to_string(&InteractionType::EdgCro).unwrap(), "\"Edg-Cro\"");
    }

    #[test]
    fn symmetric_pairs() {
        let cfg = PatchConfig::merger_style();
        for n in [5, 47, 65] {
            for r in 0..n {
                for c in 0..n {
                    assert_eq!(
                        cell_interaction(r, c, n, cfg).unwrap(),
                        cell_interaction(c, r, n, cfg).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_accuracy_by_type() {
        let cfg = PatchConfig::merger_style();
        let n = 64;
        let acc = AccuracyGrid::from_counts(n, vec![3; n * n], vec![4; n * n]).unwrap();
        let by_type = accuracy_by_type(&acc, cfg).unwrap();
        assert_eq!(by_type.len(), 1);
        assert_eq!(by_type[&InteractionType::EdgEdg].mean_accuracy, 0.75);
    }

    #[test]
    fn rejects_indivisible_patch() {
        assert!(PatchConfig::new(512, 14).is_err());
        assert_eq!(PatchConfig::new(448, 14).unwrap().patches_per_side(), 32);
    }
}
