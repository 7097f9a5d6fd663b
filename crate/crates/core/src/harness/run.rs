//! Run directories: `run.json`, `records.jsonl` and `aggregate.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, HarnessError, ModelAdapter, Query};
use crate::dataset::{DatasetManifest, ManifestRecord};
use crate::grid::Palette;
use crate::metrics::{self, Aggregate};
use crate::parser::{parse_cascade, ParseOutcome};
use crate::prompt::{build_prompt, max_tokens, ColorMapping, TEMPLATE_VERSION};

pub const RUN_FILE: &str = "run.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Evaluate only the first `limit` manifest records.
    pub limit: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            limit: None,
        }
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub manifest: PathBuf,
    pub adapter: String,
    pub n: usize,
    pub c: usize,
    pub samples: usize,
    pub concurrency: usize,
    pub temperature: f64,
    pub template_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub exact_match: bool,
    pub cell_accuracy: f64,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    /// SHA-256 over the prompt text followed by the PNG bytes.
    pub prompt_hash: String,
    /// Reply exactly as received; `None` on transport failure.
    pub raw_response: Option<String>,
    pub outcome: Option<ParseOutcome>,
    pub metrics: Option<SampleMetrics>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub transport_error: Option<String>,
}

impl RunRecord {
    pub fn is_transport_failure(&self) -> bool {
        self.raw_response.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub aggregate: Aggregate,
    /// Records written by this invocation (resumed ones excluded).
    pub new_records: usize,
}

pub fn prompt_hash(prompt: &str, image_png: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update(image_png);
    hex::encode(hasher.finalize())
}

fn grid_shape(records: &[ManifestRecord]) -> Result<(usize, usize), HarnessError> {
    let first = records
        .first()
        .ok_or_else(|| HarnessError::Incompatible("manifest has no records".into()))?;
    if let Some(other) = records.iter().find(|r| (r.n, r.c) != (first.n, first.c)) {
        return Err(HarnessError::Incompatible(format!(
            "manifest mixes n={} c={} with n={} c={} ({})",
            first.n, first.c, other.n, other.c, other.id
        )));
    }
    Ok((first.n, first.c))
}

/// Reads `records.jsonl`. A trailing line that does not parse (an
/// interrupted write) is dropped and the file truncated before it.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut offset = 0;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let last = i + 1 == lines.len();
        if !line.trim().is_empty() {
            match serde_json::from_str::<RunRecord>(line.trim()) {
                Ok(record) => {
                    if !line.ends_with('\n') {
                        let mut file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
                        file.write_all(b"\n").map_err(io_err(path))?;
                    }
                    records.push(record);
                }
                Err(_) if last => {
                    let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                    file.set_len(offset as u64).map_err(io_err(path))?;
                }
                Err(e) => {
                    return Err(HarnessError::Record {
                        path: path.display().to_string(),
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        offset += line.len();
    }
    Ok(records)
}

fn evaluate_one(adapter: &dyn ModelAdapter, root: &Path, record: &ManifestRecord, mapping: &ColorMapping) -> RunRecord {
    let prompt = build_prompt(record.n, record.n, mapping).expect("positive grid size");
    let budget = max_tokens(record.n, record.n);
    let image_path = root.join(&record.image);
    let image = match fs::read(&image_path) {
        Ok(bytes) => bytes,
        Err(e) => {
            return RunRecord {
                id: record.id.clone(),
                prompt_hash: prompt_hash(&prompt, &[]),
                raw_response: None,
                outcome: None,
                metrics: None,
                latency_ms: 0,
                attempts: 0,
                transport_error: Some(format!("{}: {e}", image_path.display())),
            }
        }
    };
    let hash = prompt_hash(&prompt, &image);
    let start = Instant::now();
    let result = adapter.query(&Query {
        id: &record.id,
        prompt: &prompt,
        image_png: &image,
        max_tokens: budget,
    });
    let latency_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(reply) => {
            let outcome = parse_cascade(&reply.text, record.n, record.n);
            let pred = outcome.matrix();
            RunRecord {
                id: record.id.clone(),
                prompt_hash: hash,
                metrics: Some(SampleMetrics {
                    exact_match: metrics::exact_match(pred, &record.matrix),
                    cell_accuracy: metrics::cell_accuracy(pred, &record.matrix),
                }),
                outcome: Some(outcome),
                raw_response: Some(reply.text),
                latency_ms,
                attempts: reply.attempts,
                transport_error: None,
            }
        }
        Err(err) => RunRecord {
            id: record.id.clone(),
            prompt_hash: hash,
            raw_response: None,
            outcome: None,
            metrics: None,
            latency_ms,
            attempts: err.attempts(),
            transport_error: Some(err.to_string()),
        },
    }
}

/// Aggregate metrics for `records`, re-parsing every raw response. Records
/// are taken in manifest order; transport failures are counted but not
/// scored.
pub fn rescore(manifest: &[ManifestRecord], records: &[RunRecord]) -> Result<Aggregate, HarnessError> {
    let (n, c) = grid_shape(manifest)?;
    let by_id: HashMap<&str, &RunRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut parsed = Vec::new();
    let mut transport_failures = 0;
    for m in manifest {
        match by_id.get(m.id.as_str()).map(|r| &r.raw_response) {
            Some(Some(raw)) => parsed.push((parse_cascade(raw, n, n), &m.matrix)),
            Some(None) => transport_failures += 1,
            None => {}
        }
    }
    let scored: Vec<_> = parsed.iter().map(|(o, t)| (o.matrix(), *t)).collect();
    let mut aggregate = Aggregate::compute(n, c, &scored)?;
    aggregate.transport_failures = transport_failures;
    Ok(aggregate)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Evaluates every manifest sample against `adapter`, writing the run
/// directory `out`. Ids already present in `records.jsonl` are skipped, so
/// an interrupted run can be resumed by calling this again.
pub fn run_eval(
    manifest_path: &Path,
    adapter: &dyn ModelAdapter,
    out: &Path,
    config: &RunConfig,
) -> Result<RunSummary, HarnessError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = manifest.records;
    if let Some(limit) = config.limit {
        samples.truncate(limit);
    }
    let (n, c) = grid_shape(&samples)?;
    let mapping = ColorMapping::from_palette(&Palette::canonical(), c)?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let info = RunInfo {
        manifest: manifest_path.to_path_buf(),
        adapter: adapter.label(),
        n,
        c,
        samples: samples.len(),
        concurrency: config.concurrency.max(1),
        temperature: 0.0,
        template_version: TEMPLATE_VERSION,
    };
    let run_path = out.join(RUN_FILE);
    if run_path.exists() {
        let text = fs::read_to_string(&run_path).map_err(io_err(&run_path))?;
        let existing: RunInfo = serde_json::from_str(&text).map_err(|e| HarnessError::Record {
            path: run_path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?;
        if (existing.n, existing.c, &existing.manifest) != (n, c, &info.manifest) {
            return Err(HarnessError::Incompatible(format!(
                "{} belongs to a different manifest or grid size",
                out.display()
            )));
        }
    }
    write_json(&run_path, &info)?;

    let records_path = out.join(RECORDS_FILE);
    let existing = load_records(&records_path)?;
    let done: std::collections::HashSet<&str> = existing.iter().map(|r| r.id.as_str()).collect();
    let pending: Vec<&ManifestRecord> = samples.iter().filter(|r| !done.contains(r.id.as_str())).collect();

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)
        .map_err(io_err(&records_path))?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
    let workers = config.concurrency.max(1).min(pending.len().max(1));
    let mut new_records = Vec::with_capacity(pending.len());

    thread::scope(|scope| -> Result<(), HarnessError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, mapping) = (&next, &pending, &mapping);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = pending.get(i) else { break };
                if tx.send((i, evaluate_one(adapter, root, record, mapping))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: lines go out in manifest order regardless of
        // completion order.
        let mut buffered = BTreeMap::new();
        let mut cursor = 0;
        for (i, record) in rx {
            buffered.insert(i, record);
            while let Some(record) = buffered.remove(&cursor) {
                let line = serde_json::to_string(&record).expect("record serializes");
                writeln!(file, "{line}").map_err(io_err(&records_path))?;
                file.flush().map_err(io_err(&records_path))?;
                new_records.push(record);
                cursor += 1;
            }
        }
        Ok(())
    })?;

    let mut all = existing;
    all.extend(new_records.iter().cloned());
    let aggregate = rescore(&samples, &all)?;
    write_json(&out.join(AGGREGATE_FILE), &aggregate)?;
    Ok(RunSummary {
        dir: out.to_path_buf(),
        aggregate,
        new_records: new_records.len(),
    })
}
