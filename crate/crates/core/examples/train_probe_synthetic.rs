//! Trains a spatial probe on synthetic encoder features and reports
//! validation accuracy, per-interaction-type accuracy and timing. Training
//! stops at 99% validation accuracy or after three validation passes
//! without improvement.
//!
//! cargo run --release --example train_probe_synthetic -- [n] [colors] [max_iters] [eval_every]

use std::time::Instant;

use grid2matrix::geometry::{accuracy_by_type, PatchConfig};
use grid2matrix::grid::sample_matrix;
use grid2matrix::probe::{evaluate, synthetic_features, train_with_progress, Sample, SampleSource, TrainConfig};

fn synthetic(count: usize, n: usize, c: usize, seed_base: u64) -> anyhow::Result<SampleSource> {
    let mut samples = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let labels = sample_matrix(seed_base + i, n, c)?;
        let features = synthetic_features(&labels, 0.05, 16, seed_base + i)?;
        samples.push(Sample {
            id: format!("synthetic-{i:04}"),
            features,
            labels,
        });
    }
    Ok(SampleSource::Memory(samples))
}

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = args.first().copied().unwrap_or(32);
    let c = args.get(1).copied().unwrap_or(3);
    let max_iters = args.get(2).copied().unwrap_or(2000);
    let eval_every = args.get(3).copied().unwrap_or(50);

    let train_set = synthetic(800, n, c, 0)?;
    let val_set = synthetic(200, n, c, 1_000_000)?;
    let config = TrainConfig {
        max_iters,
        eval_every,
        target_accuracy: Some(0.99),
        patience: Some(3),
        seed: 7,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let (params, log) = train_with_progress(&config, &train_set, Some(&val_set), c, |point, loss| {
        println!(
            "iter {:5}  loss {loss:.4}  val cell acc {:.4}  {:.0}s",
            point.iteration,
            point.cell_accuracy,
            start.elapsed().as_secs_f64()
        );
    })?;
    let elapsed = start.elapsed();
    println!(
        "{} iterations in {:.1}s ({:.0} ms/iter), final loss {:.4}",
        log.iterations,
        elapsed.as_secs_f64(),
        elapsed.as_secs_f64() * 1e3 / log.iterations as f64,
        log.losses.last().copied().unwrap_or(f64::NAN)
    );

    let eval = evaluate(&params, &val_set, n, c)?;
    println!(
        "validation: exact match {:.2}%, cell accuracy {:.2}%",
        eval.aggregate.exact_match * 100.0,
        eval.aggregate.cell_accuracy * 100.0
    );
    for (kind, acc) in accuracy_by_type(&eval.grid, PatchConfig::merger_style())? {
        println!("  {kind:8} cells {:5}  accuracy {:.4}", acc.cells, acc.mean_accuracy);
    }
    Ok(())
}
