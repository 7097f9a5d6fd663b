//! End-to-end runs over replay adapters.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use grid2matrix::dataset::{build_split, DatasetManifest, Split};
use grid2matrix::harness::run::{AGGREGATE_FILE, RECORDS_FILE};
use grid2matrix::harness::{
    load_records, run_eval, ReplayAdapter, RunConfig, RunRecord, PROPRIETARY_SAMPLE_COUNT,
};
use grid2matrix::parser::{format_matrix, parse_cascade};
use grid2matrix::GridSpec;

fn dataset(dir: &Path, n: usize, count: usize) -> (PathBuf, DatasetManifest) {
    let spec = GridSpec::new(n, 3).unwrap();
    let manifest = build_split(&spec, Split::Test, count, 5, dir, false).unwrap();
    (DatasetManifest::manifest_path(dir, Split::Test), manifest)
}

fn oracle(manifest: &DatasetManifest) -> HashMap<String, String> {
    manifest
        .records
        .iter()
        .map(|r| (r.id.clone(), format_matrix(&r.matrix)))
        .collect()
}

/// Oracle replies with a mix of formats and a few deliberate errors.
fn noisy(manifest: &DatasetManifest) -> HashMap<String, String> {
    manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let exact = format_matrix(&r.matrix);
            let text = match i % 5 {
                0 => exact,
                1 => format!("```json\n{exact}\n```"),
                2 => r
                    .matrix
                    .to_rows()
                    .iter()
                    .enumerate()
                    .map(|(k, row)| format!("ROW{}={:?}", k + 1, row))
                    .collect::<Vec<_>>()
                    .join("\n"),
                3 => exact.replacen('0', "1", 1),
                _ => "I cannot read this image.".to_string(),
            };
            (r.id.clone(), text)
        })
        .collect()
}

fn without_latency(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    records.iter_mut().for_each(|r| r.latency_ms = 0);
    records
}

#[test]
fn oracle_replay_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 3, 12);
    let adapter = ReplayAdapter::new("oracle", oracle(&manifest));
    let summary = run_eval(&path, &adapter, &dir.path().join("run"), &RunConfig::default()).unwrap();
    assert_eq!(summary.aggregate.count, 12);
    assert_eq!(summary.aggregate.exact_match, 1.0);
    assert_eq!(summary.aggregate.cell_accuracy, 1.0);
    assert_eq!(summary.new_records, 12);
}

#[test]
fn missing_reply_is_a_transport_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 3, 10);
    let mut replies = oracle(&manifest);
    let dropped = manifest.records[4].id.clone();
    replies.remove(&dropped);
    let out = dir.path().join("run");
    let summary = run_eval(&path, &ReplayAdapter::new("partial", replies), &out, &RunConfig::default()).unwrap();
    assert_eq!(summary.aggregate.transport_failures, 1);
    assert_eq!(summary.aggregate.count, 9);
    assert_eq!(summary.aggregate.exact_match, 1.0);
    let records = load_records(&out.join(RECORDS_FILE)).unwrap();
    let failed: Vec<_> = records.iter().filter(|r| r.is_transport_failure()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].id, dropped);
    assert!(failed[0].transport_error.as_deref().unwrap().contains(&dropped));
}

#[test]
fn records_are_in_manifest_order_and_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 4, 15);
    let out = dir.path().join("run");
    run_eval(&path, &ReplayAdapter::new("noisy", noisy(&manifest)), &out, &RunConfig::default()).unwrap();
    let records = load_records(&out.join(RECORDS_FILE)).unwrap();
    let ids: Vec<_> = records.iter().map(|r| r.id.clone()).collect();
    let want: Vec<_> = manifest.records.iter().map(|r| r.id.clone()).collect();
    assert_eq!(ids, want);
    for r in &records {
        let raw = r.raw_response.as_deref().unwrap();
        assert_eq!(r.outcome.as_ref().unwrap(), &parse_cascade(raw, 4, 4));
        assert_eq!(r.prompt_hash.len(), 64);
    }
}

#[test]
fn aggregate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 4, 20);
    let adapter = ReplayAdapter::new("noisy", noisy(&manifest));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_eval(&path, &adapter, &a, &RunConfig::default()).unwrap();
    let serial = RunConfig {
        concurrency: 1,
        ..RunConfig::default()
    };
    run_eval(&path, &adapter, &b, &serial).unwrap();
    assert_eq!(fs::read(a.join(AGGREGATE_FILE)).unwrap(), fs::read(b.join(AGGREGATE_FILE)).unwrap());
    assert_eq!(
        without_latency(load_records(&a.join(RECORDS_FILE)).unwrap()),
        without_latency(load_records(&b.join(RECORDS_FILE)).unwrap())
    );
}

#[test]
fn self_replay_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 4, 20);
    let first = dir.path().join("first");
    let a = run_eval(&path, &ReplayAdapter::new("noisy", noisy(&manifest)), &first, &RunConfig::default()).unwrap();
    assert!(a.aggregate.exact_match > 0.0 && a.aggregate.exact_match < 1.0);
    assert_eq!(a.aggregate.parse_failures, 4);

    let replay = ReplayAdapter::load(&first.join(RECORDS_FILE)).unwrap();
    let second = dir.path().join("second");
    let b = run_eval(&path, &replay, &second, &RunConfig::default()).unwrap();
    assert_eq!(a.aggregate, b.aggregate);
    assert_eq!(
        fs::read(first.join(AGGREGATE_FILE)).unwrap(),
        fs::read(second.join(AGGREGATE_FILE)).unwrap()
    );
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 3, 16);
    let adapter = ReplayAdapter::new("noisy", noisy(&manifest));
    let full = dir.path().join("full");
    run_eval(&path, &adapter, &full, &RunConfig::default()).unwrap();

    // Interrupt: keep six complete lines plus half of the seventh.
    let text = fs::read_to_string(full.join(RECORDS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let partial = format!("{}\n{}", lines[..6].join("\n"), &lines[6][..lines[6].len() / 2]);
    let resumed = dir.path().join("resumed");
    fs::create_dir_all(&resumed).unwrap();
    fs::write(resumed.join(RECORDS_FILE), partial).unwrap();

    let summary = run_eval(&path, &adapter, &resumed, &RunConfig::default()).unwrap();
    assert_eq!(summary.new_records, 10);
    assert_eq!(
        without_latency(load_records(&full.join(RECORDS_FILE)).unwrap()),
        without_latency(load_records(&resumed.join(RECORDS_FILE)).unwrap())
    );
    assert_eq!(
        fs::read(full.join(AGGREGATE_FILE)).unwrap(),
        fs::read(resumed.join(AGGREGATE_FILE)).unwrap()
    );

    // A second resume has nothing left to do.
    let again = run_eval(&path, &adapter, &resumed, &RunConfig::default()).unwrap();
    assert_eq!(again.new_records, 0);
}

#[test]
fn limit_and_default_count() {
    assert_eq!(PROPRIETARY_SAMPLE_COUNT, 300);
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(dir.path(), 2, 8);
    let config = RunConfig {
        limit: Some(3),
        ..RunConfig::default()
    };
    let summary = run_eval(&path, &ReplayAdapter::new("o", oracle(&manifest)), &dir.path().join("r"), &config).unwrap();
    assert_eq!(summary.aggregate.count, 3);
}

#[test]
fn run_directory_rejects_other_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = dataset(&dir.path().join("d3"), 3, 4);
    let (other, _) = dataset(&dir.path().join("d4"), 4, 4);
    let out = dir.path().join("run");
    run_eval(&path, &ReplayAdapter::new("o", oracle(&manifest)), &out, &RunConfig::default()).unwrap();
    assert!(run_eval(&other, &ReplayAdapter::new("o", HashMap::new()), &out, &RunConfig::default()).is_err());
}
