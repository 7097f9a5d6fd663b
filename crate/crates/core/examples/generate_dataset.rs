//! Builds a small train/val/test dataset of 12x12 grids with 5 colors,
//! verifies every image decodes back to its matrix, and prints the first
//! manifest row.
//!
//! cargo run --example generate_dataset -- [out_dir]

use grid2matrix::dataset::{build_dataset, DatasetManifest, Split, SplitCounts};
use grid2matrix::GridSpec;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-data".into());
    let out = std::path::Path::new(&out);
    let spec = GridSpec::new(12, 5)?;
    let counts = SplitCounts {
        train: 40,
        val: 10,
        test: 20,
    };
    for manifest in build_dataset(&spec, counts, 42, out, true)? {
        manifest.verify(out, &spec)?;
        println!("{:5} {:3} samples, verified", manifest.split, manifest.records.len());
    }
    let first = std::fs::read_to_string(DatasetManifest::manifest_path(out, Split::Test))?;
    println!("{}", first.lines().next().unwrap_or_default());
    Ok(())
}
