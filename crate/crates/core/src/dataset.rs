//! Dataset manifests: seeded sample generation, PNG output and JSON-lines records.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, GridError, GridSpec, RgbImage};
use crate::matrix::ColorMatrix;
use crate::splitmix::{mix64, SplitMix64};

pub const GENERATOR_VERSION: &str = "g2m-gen/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} already exists (pass force to overwrite)")]
    AlreadyExists(PathBuf),
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record {id}: {message}")]
    Verify { id: String, message: String },
    #[error("unknown split {0:?} (expected train, val or test)")]
    UnknownSplit(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6E00_0001,
            Split::Val => 0x7661_6C00_0000_0002,
            Split::Test => 0x7465_7374_0000_0003,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(DatasetError::UnknownSplit(s.to_string())),
        }
    }
}

/// Per-split sample counts. Defaults to 8,000 / 2,000 / 10,000.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 8_000,
            val: 2_000,
            test: 10_000,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// One JSON-lines manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub seed: u64,
    pub n: usize,
    pub c: usize,
    pub matrix: ColorMatrix,
    /// Image path relative to the manifest's directory.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: Split,
    pub generator_version: String,
    pub records: Vec<ManifestRecord>,
}

/// Seed for sample `ordinal` of `split`: the `ordinal`-th output of a
/// SplitMix64 stream keyed by `(base_seed, split)`.
pub fn sample_seed(base_seed: u64, split: Split, ordinal: u64) -> u64 {
    let key = mix64(base_seed ^ split.salt());
    let mut stream = SplitMix64::new(key.wrapping_add(ordinal.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    stream.next_u64()
}

pub fn sample_id(split: Split, n: usize, c: usize, ordinal: usize) -> String {
    format!("{split}-n{n}-c{c}-{ordinal:06}")
}

impl DatasetManifest {
    pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
        dir.join(format!("{split}.jsonl"))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
        for record in &self.records {
            let line = serde_json::to_string(record).expect("record serializes");
            writeln!(out, "{line}").map_err(io_err(path))?;
        }
        out.flush().map_err(io_err(path))
    }

    /// Reads a JSON-lines manifest. The split is taken from the file stem
    /// (`train.jsonl`, ...) and defaults to `test`.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let split = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .unwrap_or(Split::Test);
        let file = File::open(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| DatasetError::Manifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if !seen.insert(record.id.clone()) {
                return Err(DatasetError::Manifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate id {}", record.id),
                });
            }
            records.push(record);
        }
        Ok(Self {
            split,
            generator_version: GENERATOR_VERSION.to_string(),
            records,
        })
    }

    /// Checks that every image decodes to its stored matrix.
    pub fn verify(&self, root: &Path, spec: &GridSpec) -> Result<(), DatasetError> {
        for record in &self.records {
            let image = RgbImage::load_png(&root.join(&record.image))?;
            let decoded = grid::decode_image(&image, &spec.palette, record.n)?;
            if decoded != record.matrix {
                return Err(DatasetError::Verify {
                    id: record.id.clone(),
                    message: "decoded image differs from stored matrix".into(),
                });
            }
        }
        Ok(())
    }
}

/// Generates `count` samples of one split under `out_dir`, writing
/// `images/<id>.png` and `<split>.jsonl`.
pub fn build_split(
    spec: &GridSpec,
    split: Split,
    count: usize,
    base_seed: u64,
    out_dir: &Path,
    force: bool,
) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    let manifest_path = DatasetManifest::manifest_path(out_dir, split);
    if manifest_path.exists() && !force {
        return Err(DatasetError::AlreadyExists(manifest_path));
    }
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(io_err(&image_dir))?;

    let mut records = Vec::with_capacity(count);
    for ordinal in 0..count {
        let seed = sample_seed(base_seed, split, ordinal as u64);
        let id = sample_id(split, spec.n, spec.c, ordinal);
        let matrix = grid::sample_matrix(seed, spec.n, spec.c)?;
        let image = grid::render(&matrix, &spec.palette, spec.image_size)?;
        let rel = format!("images/{id}.png");
        let path = out_dir.join(&rel);
        if path.exists() && !force {
            return Err(DatasetError::AlreadyExists(path));
        }
        image.save_png(&path)?;
        records.push(ManifestRecord {
            id,
            seed,
            n: spec.n,
            c: spec.c,
            matrix,
            image: rel,
        });
    }
    let manifest = DatasetManifest {
        split,
        generator_version: GENERATOR_VERSION.to_string(),
        records,
    };
    manifest.write_jsonl(&manifest_path)?;
    Ok(manifest)
}

/// Builds train, val and test splits in one directory.
pub fn build_dataset(
    spec: &GridSpec,
    counts: SplitCounts,
    base_seed: u64,
    out_dir: &Path,
    force: bool,
) -> Result<Vec<DatasetManifest>, DatasetError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    Split::ALL
        .iter()
        .map(|&split| build_split(spec, split, counts.get(split), base_seed, out_dir, force))
        .collect()
}
