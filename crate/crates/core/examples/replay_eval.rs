//! End-to-end evaluation without a network: builds a 4x4 test split, answers
//! each prompt from canned replies (some correct, some fenced, some wrong),
//! runs the harness and prints the aggregate.
//!
//! cargo run --example replay_eval -- [out_dir]

use std::collections::HashMap;

use grid2matrix::dataset::{build_split, DatasetManifest, Split};
use grid2matrix::harness::{run_eval, ReplayAdapter, RunConfig};
use grid2matrix::parser::format_matrix;
use grid2matrix::GridSpec;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-replay".into());
    let out = std::path::Path::new(&out);
    let data = out.join("data");
    let manifest = build_split(&GridSpec::new(4, 3)?, Split::Test, 30, 9, &data, true)?;

    let replies: HashMap<String, String> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let exact = format_matrix(&r.matrix);
            let text = match i % 3 {
                0 => exact,
                1 => format!("Here you go:\n```\n{exact}\n```"),
                _ => exact.replacen('1', "2", 2),
            };
            (r.id.clone(), text)
        })
        .collect();

    let run_dir = out.join("run");
    let _ = std::fs::remove_dir_all(&run_dir);
    let adapter = ReplayAdapter::new("canned", replies);
    let summary = run_eval(
        &DatasetManifest::manifest_path(&data, Split::Test),
        &adapter,
        &run_dir,
        &RunConfig::default(),
    )?;
    println!("{}", serde_json::to_string_pretty(&summary.aggregate)?);
    println!("run written to {}", summary.dir.display());
    Ok(())
}
