//! Heatmap images, summary tables and breakdown CSVs built from persisted
//! `aggregate.json` files.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{accuracy_by_type, GeometryError, PatchConfig};
use crate::grid::{Palette, RgbImage, DEFAULT_IMAGE_SIZE};
use crate::metrics::{random_baseline, AccuracyGrid, Aggregate, MetricsError};

pub const HEATMAP_FILE: &str = "heatmap.png";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const IOU_FILE: &str = "iou.csv";
pub const INTERACTION_FILE: &str = "interaction.csv";

/// Fill for cells that were never scored.
pub const NO_DATA: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report: the accuracy grid has no scored cells")]
    Empty,
    #[error("invalid colormap: {0}")]
    Colormap(String),
    #[error("runs disagree on color count ({0} vs {1})")]
    MixedColors(usize, usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |e| ReportError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Piecewise-linear map from `[0, 1]` to RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    name: String,
    stops: Vec<(f64, [u8; 3])>,
}

impl Colormap {
    pub fn new(name: impl Into<String>, stops: Vec<(f64, [u8; 3])>) -> Result<Self, ReportError> {
        if stops.len() < 2 {
            return Err(ReportError::Colormap("need at least two control points".into()));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(ReportError::Colormap("control points must span 0 to 1".into()));
        }
        if stops.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(ReportError::Colormap("control values must strictly increase".into()));
        }
        Ok(Self {
            name: name.into(),
            stops,
        })
    }

    /// Blue at 0, white at 0.5, red at 1.
    pub fn blue_white_red() -> Self {
        Self::new(
            "blue-white-red",
            vec![(0.0, [0, 0, 255]), (0.5, [255, 255, 255]), (1.0, [255, 0, 0])],
        )
        .expect("valid stops")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Color at `t`, clamped to `[0, 1]`.
    pub fn at(&self, t: f64) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let k = self.stops.windows(2).position(|w| t <= w[1].0).unwrap_or(self.stops.len() - 2);
        let (t0, c0) = self.stops[k];
        let (t1, c1) = self.stops[k + 1];
        let f = (t - t0) / (t1 - t0);
        std::array::from_fn(|i| (f64::from(c0[i]) + f * (f64::from(c1[i]) - f64::from(c0[i]))).round() as u8)
    }
}

/// Position of `accuracy` on the color scale: `baseline` maps to 0 and
/// perfect accuracy to 1, values below the baseline clip to 0.
pub fn scale(accuracy: f64, baseline: f64) -> f64 {
    if baseline >= 1.0 {
        return 1.0;
    }
    ((accuracy - baseline) / (1.0 - baseline)).clamp(0.0, 1.0)
}

/// One `cell_px`-square block per grid cell.
pub fn render_heatmap(
    grid: &AccuracyGrid,
    colormap: &Colormap,
    baseline: f64,
    cell_px: u32,
) -> Result<RgbImage, ReportError> {
    if grid.overall().is_none() {
        return Err(ReportError::Empty);
    }
    let n = grid.n();
    let cell_px = cell_px.max(1);
    let mut image = RgbImage::new(n as u32 * cell_px, NO_DATA);
    for row in 0..n {
        for col in 0..n {
            let Some(acc) = grid.accuracy(row, col) else { continue };
            let rgb = colormap.at(scale(acc, baseline));
            for y in 0..cell_px {
                for x in 0..cell_px {
                    image.put_pixel(col as u32 * cell_px + x, row as u32 * cell_px + y, rgb);
                }
            }
        }
    }
    Ok(image)
}

/// Block size giving an image close to 512 px wide.
pub fn default_cell_px(n: usize) -> u32 {
    (DEFAULT_IMAGE_SIZE / n.max(1) as u32).max(1)
}

/// Writes `image` as PNG with the colormap and baseline anchor stored in
/// text chunks.
pub fn save_heatmap(path: &Path, image: &RgbImage, colormap: &Colormap, baseline: f64) -> Result<(), ReportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let png_err = |e: png::EncodingError| ReportError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.size(), image.size());
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder
        .add_text_chunk("g2m:colormap".into(), colormap.name().into())
        .map_err(png_err)?;
    encoder
        .add_text_chunk("g2m:baseline".into(), format!("{baseline}"))
        .map_err(png_err)?;
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(image.as_bytes()).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Rounds half away from zero to one decimal.
pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

/// `"EM / Cell"` with both rates as percentages to one decimal.
pub fn format_exact_cell(exact_match: f64, cell_accuracy: f64) -> String {
    format!("{:.1} / {:.1}", round1(exact_match * 100.0), round1(cell_accuracy * 100.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub n: usize,
    pub c: usize,
    pub count: usize,
    pub exact_match_pct: f64,
    pub cell_accuracy_pct: f64,
}

impl SummaryRow {
    pub fn formatted(&self) -> String {
        format!("{:.1} / {:.1}", self.exact_match_pct, self.cell_accuracy_pct)
    }
}

/// One row per `(model, aggregate)`; all runs must share a color count.
pub fn summary_table(runs: &[(String, Aggregate)]) -> Result<Vec<SummaryRow>, ReportError> {
    if let Some((_, first)) = runs.first() {
        if let Some((_, other)) = runs.iter().find(|(_, a)| a.c != first.c) {
            return Err(ReportError::MixedColors(first.c, other.c));
        }
    }
    Ok(runs
        .iter()
        .map(|(model, a)| SummaryRow {
            model: model.clone(),
            n: a.n,
            c: a.c,
            count: a.count,
            exact_match_pct: round1(a.exact_match * 100.0),
            cell_accuracy_pct: round1(a.cell_accuracy * 100.0),
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Columns: `model,n,c,count,exact_match,cell_accuracy,exact_cell`.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("model,n,c,count,exact_match,cell_accuracy,exact_cell\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.1},{:.1},{}",
            csv_field(&r.model),
            r.n,
            r.c,
            r.count,
            r.exact_match_pct,
            r.cell_accuracy_pct,
            r.formatted()
        );
    }
    out
}

/// Columns: `color,name,iou`; `iou` is empty when the color never occurs
/// in either prediction or truth.
pub fn iou_csv(aggregate: &Aggregate) -> String {
    let palette = Palette::canonical();
    let mut out = String::from("color,name,iou\n");
    for k in 0..aggregate.c {
        let iou = aggregate.iou.get(&k.to_string()).copied().flatten();
        let name = u8::try_from(k).ok().and_then(|k| palette.name(k)).unwrap_or("");
        let value = iou.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{k},{name},{value}");
    }
    out
}

/// Columns: `type,cells,mean_accuracy`, one row per interaction type present.
pub fn interaction_csv(grid: &AccuracyGrid, patch: PatchConfig) -> Result<String, ReportError> {
    let mut out = String::from("type,cells,mean_accuracy\n");
    for (ty, acc) in accuracy_by_type(grid, patch)? {
        let _ = writeln!(out, "{ty},{},{:.6}", acc.cells, acc.mean_accuracy);
    }
    Ok(out)
}

/// Files produced by [`report_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub heatmap: PathBuf,
    pub summary: PathBuf,
    pub iou: PathBuf,
    pub interaction: PathBuf,
}

/// Reads `aggregate.json` from a run (or probe evaluation) directory.
pub fn load_aggregate(run_dir: &Path) -> Result<Aggregate, ReportError> {
    let path = run_dir.join("aggregate.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Io {
        path,
        message: e.to_string(),
    })
}

/// Writes heatmap, summary, IoU and interaction reports for one run.
pub fn report_run(model: &str, aggregate: &Aggregate, patch: PatchConfig, out: &Path) -> Result<ReportFiles, ReportError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let grid = aggregate.accuracy_grid()?;
    let colormap = Colormap::blue_white_red();
    let baseline = random_baseline(aggregate.c);
    let files = ReportFiles {
        heatmap: out.join(HEATMAP_FILE),
        summary: out.join(SUMMARY_FILE),
        iou: out.join(IOU_FILE),
        interaction: out.join(INTERACTION_FILE),
    };
    let image = render_heatmap(&grid, &colormap, baseline, default_cell_px(aggregate.n))?;
    save_heatmap(&files.heatmap, &image, &colormap, baseline)?;
    let rows = summary_table(&[(model.to_string(), aggregate.clone())])?;
    fs::write(&files.summary, summary_csv(&rows)).map_err(io_err(&files.summary))?;
    fs::write(&files.iou, iou_csv(aggregate)).map_err(io_err(&files.iou))?;
    let interaction = interaction_csv(&grid, patch)?;
    fs::write(&files.interaction, interaction).map_err(io_err(&files.interaction))?;
    Ok(files)
}
