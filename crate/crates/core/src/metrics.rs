//! Exact Match, Cell Accuracy, pooled per-color IoU and per-position
//! accuracy accumulation.
//!
//! Predictions are `Option<&ParsedMatrix>`: `None` is a parse failure and
//! scores zero on every cell. A parsed matrix of the wrong shape is scored
//! the same way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{ColorMatrix, Matrix};
use crate::parser::ParsedMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("color {color} is out of range for {c} colors")]
    InvalidColor { color: usize, c: usize },
    #[error("batch mixes grid sizes {expected} and {found}")]
    MixedSizes { expected: usize, found: usize },
    #[error("heatmap hits exceed totals")]
    InconsistentHeatmap,
}

pub type Scored<'a> = (Option<&'a ParsedMatrix>, &'a ColorMatrix);

fn comparable<'a>(pred: Option<&'a ParsedMatrix>, truth: &ColorMatrix) -> Option<&'a ParsedMatrix> {
    pred.filter(|p| p.shape() == truth.shape())
}

fn correct_cells(pred: Option<&ParsedMatrix>, truth: &ColorMatrix) -> usize {
    comparable(pred, truth).map_or(0, |p| {
        p.as_slice()
            .iter()
            .zip(truth.as_slice())
            .filter(|(&a, &b)| a == i64::from(b))
            .count()
    })
}

pub fn exact_match(pred: Option<&ParsedMatrix>, truth: &ColorMatrix) -> bool {
    comparable(pred, truth).is_some() && correct_cells(pred, truth) == truth.as_slice().len()
}

pub fn cell_accuracy(pred: Option<&ParsedMatrix>, truth: &ColorMatrix) -> f64 {
    let total = truth.as_slice().len();
    if total == 0 {
        return 0.0;
    }
    correct_cells(pred, truth) as f64 / total as f64
}

/// Expected cell accuracy of uniform guessing.
pub fn random_baseline(c: usize) -> f64 {
    1.0 / c as f64
}

/// Per-color true positive, false positive and false negative cell counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(c: usize) -> Self {
        Self {
            tp: vec![0; c],
            fp: vec![0; c],
            fn_: vec![0; c],
        }
    }

    pub fn colors(&self) -> usize {
        self.tp.len()
    }

    /// Adds one grid. Failed or mis-shaped predictions contribute nothing.
    pub fn add(&mut self, pred: Option<&ParsedMatrix>, truth: &ColorMatrix) {
        let Some(pred) = comparable(pred, truth) else {
            return;
        };
        let c = self.colors();
        for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
            let t = usize::from(t);
            let p = usize::try_from(p).ok().filter(|&p| p < c);
            match p {
                Some(p) if p == t => self.tp[t] += 1,
                Some(p) => {
                    self.fp[p] += 1;
                    if t < c {
                        self.fn_[t] += 1;
                    }
                }
                None if t < c => self.fn_[t] += 1,
                None => {}
            }
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (dst, src) in [(&mut self.tp, &other.tp), (&mut self.fp, &other.fp), (&mut self.fn_, &other.fn_)] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    /// `tp / (tp + fp + fn)`, or `None` when the color never appears.
    pub fn iou(&self, color: usize) -> Result<Option<f64>, MetricsError> {
        if color >= self.colors() {
            return Err(MetricsError::InvalidColor {
                color,
                c: self.colors(),
            });
        }
        let denom = self.tp[color] + self.fp[color] + self.fn_[color];
        Ok((denom > 0).then(|| self.tp[color] as f64 / denom as f64))
    }
}

/// Pooled IoU for one color over a batch.
pub fn color_iou(results: &[Scored<'_>], color: usize, c: usize) -> Result<Option<f64>, MetricsError> {
    let mut counts = ConfusionCounts::new(c);
    for &(pred, truth) in results {
        counts.add(pred, truth);
    }
    counts.iou(color)
}

/// Per-position hit and evaluation counts over a test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccuracyGrid {
    n: usize,
    hits: Vec<u64>,
    totals: Vec<u64>,
}

impl AccuracyGrid {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hits: vec![0; n * n],
            totals: vec![0; n * n],
        }
    }

    pub fn from_counts(n: usize, hits: Vec<u64>, totals: Vec<u64>) -> Result<Self, MetricsError> {
        if hits.len() != n * n || totals.len() != n * n || hits.iter().zip(&totals).any(|(h, t)| h > t) {
            return Err(MetricsError::InconsistentHeatmap);
        }
        Ok(Self { n, hits, totals })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hits(&self) -> &[u64] {
        &self.hits
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn is_empty(&self) -> bool {
        self.totals.iter().all(|&t| t == 0)
    }

    pub fn record(&mut self, pred: Option<&ParsedMatrix>, truth: &ColorMatrix) -> Result<(), MetricsError> {
        if truth.rows() != self.n || truth.cols() != self.n {
            return Err(MetricsError::MixedSizes {
                expected: self.n,
                found: truth.rows(),
            });
        }
        let pred = comparable(pred, truth);
        for i in 0..self.n * self.n {
            self.totals[i] += 1;
            if let Some(p) = pred {
                if p.as_slice()[i] == i64::from(truth.as_slice()[i]) {
                    self.hits[i] += 1;
                }
            }
        }
        Ok(())
    }

    /// Adds one grid's per-cell correctness directly.
    pub fn record_mask(&mut self, correct: &Matrix<bool>) -> Result<(), MetricsError> {
        if correct.rows() != self.n || correct.cols() != self.n {
            return Err(MetricsError::MixedSizes {
                expected: self.n,
                found: correct.rows(),
            });
        }
        for (i, &ok) in correct.as_slice().iter().enumerate() {
            self.totals[i] += 1;
            self.hits[i] += u64::from(ok);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &AccuracyGrid) -> Result<(), MetricsError> {
        if other.n != self.n {
            return Err(MetricsError::MixedSizes {
                expected: self.n,
                found: other.n,
            });
        }
        for i in 0..self.hits.len() {
            self.hits[i] += other.hits[i];
            self.totals[i] += other.totals[i];
        }
        Ok(())
    }

    pub fn accuracy(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n + col;
        (self.totals[i] > 0).then(|| self.hits[i] as f64 / self.totals[i] as f64)
    }

    /// Pooled accuracy over every evaluated cell.
    pub fn overall(&self) -> Option<f64> {
        let total: u64 = self.totals.iter().sum();
        (total > 0).then(|| self.hits.iter().sum::<u64>() as f64 / total as f64)
    }
}

pub fn accumulate_heatmap(results: &[Scored<'_>]) -> Result<AccuracyGrid, MetricsError> {
    let n = results.first().map_or(0, |(_, t)| t.rows());
    let mut grid = AccuracyGrid::new(n);
    for &(pred, truth) in results {
        grid.record(pred, truth)?;
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapCounts {
    pub hits: Vec<Vec<u64>>,
    pub totals: Vec<Vec<u64>>,
}

impl From<&AccuracyGrid> for HeatmapCounts {
    fn from(grid: &AccuracyGrid) -> Self {
        let rows = |v: &[u64]| v.chunks(grid.n.max(1)).map(<[u64]>::to_vec).collect();
        Self {
            hits: rows(&grid.hits),
            totals: rows(&grid.totals),
        }
    }
}

impl HeatmapCounts {
    pub fn to_grid(&self) -> Result<AccuracyGrid, MetricsError> {
        let n = self.hits.len();
        AccuracyGrid::from_counts(
            n,
            self.hits.iter().flatten().copied().collect(),
            self.totals.iter().flatten().copied().collect(),
        )
    }
}

/// Batch summary persisted as `aggregate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub c: usize,
    /// Grids scored (transport failures excluded).
    pub count: usize,
    pub exact_match: f64,
    pub cell_accuracy: f64,
    pub iou: BTreeMap<String, Option<f64>>,
    pub heatmap: HeatmapCounts,
    #[serde(default)]
    pub parse_failures: usize,
    #[serde(default)]
    pub transport_failures: usize,
}

impl Aggregate {
    pub fn compute(n: usize, c: usize, results: &[Scored<'_>]) -> Result<Self, MetricsError> {
        let mut grid = AccuracyGrid::new(n);
        let mut confusion = ConfusionCounts::new(c);
        let mut exact = 0usize;
        let mut correct = 0usize;
        let mut failures = 0usize;
        for &(pred, truth) in results {
            grid.record(pred, truth)?;
            confusion.add(pred, truth);
            exact += usize::from(exact_match(pred, truth));
            correct += correct_cells(pred, truth);
            failures += usize::from(pred.is_none());
        }
        let count = results.len();
        let cells = count * n * n;
        let iou = (0..c)
            .map(|k| Ok((k.to_string(), confusion.iou(k)?)))
            .collect::<Result<_, MetricsError>>()?;
        Ok(Self {
            n,
            c,
            count,
            exact_match: if count == 0 { 0.0 } else { exact as f64 / count as f64 },
            cell_accuracy: if cells == 0 { 0.0 } else { correct as f64 / cells as f64 },
            iou,
            heatmap: HeatmapCounts::from(&grid),
            parse_failures: failures,
            transport_failures: 0,
        })
    }

    pub fn accuracy_grid(&self) -> Result<AccuracyGrid, MetricsError> {
        if self.heatmap.hits.is_empty() {
            return Ok(AccuracyGrid::new(self.n));
        }
        self.heatmap.to_grid()
    }
}
