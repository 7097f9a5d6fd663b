//! Produces a report for a simulated run whose accuracy decays toward the
//! bottom-right corner: heatmap PNG, summary, IoU and interaction CSVs.
//!
//! cargo run --example render_report -- [out_dir]

use grid2matrix::geometry::PatchConfig;
use grid2matrix::grid::sample_matrix;
use grid2matrix::metrics::Aggregate;
use grid2matrix::parser::ParsedMatrix;
use grid2matrix::report::report_run;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-report".into());
    let (n, c) = (48, 3);
    let truths: Vec<_> = (0..50).map(|s| sample_matrix(s, n, c)).collect::<Result<_, _>>()?;
    let preds: Vec<ParsedMatrix> = truths
        .iter()
        .enumerate()
        .map(|(s, t)| {
            let values = t
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let (r, col) = (i / n, i % n);
                    let wrong = (r + col + s) % (2 * n) < r + col;
                    i64::from(if wrong { (v + 1) % c as u8 } else { v })
                })
                .collect();
            ParsedMatrix::from_flat(n, n, values).expect("n * n values")
        })
        .collect();
    let scored: Vec<_> = preds.iter().zip(&truths).map(|(p, t)| (Some(p), t)).collect();
    let aggregate = Aggregate::compute(n, c, &scored)?;
    let files = report_run("simulated", &aggregate, PatchConfig::merger_style(), std::path::Path::new(&out))?;
    println!("{}", std::fs::read_to_string(&files.summary)?);
    println!("{}", std::fs::read_to_string(&files.interaction)?);
    println!("heatmap: {}", files.heatmap.display());
    Ok(())
}
