//! Scores a handful of parsed predictions against ground truth: exact
//! match, cell accuracy, pooled per-color IoU and the per-position heatmap.

use grid2matrix::metrics::{random_baseline, Aggregate};
use grid2matrix::parser::parse_cascade;
use grid2matrix::ColorMatrix;

fn main() -> anyhow::Result<()> {
    let truth = ColorMatrix::from_rows(&[vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]]).expect("square");
    let replies = [
        "[[0, 1, 2], [2, 0, 1], [1, 2, 0]]",
        "[[0, 1, 2], [2, 0, 1], [1, 2, 2]]",
        "[[0, 0, 0], [0, 0, 0], [0, 0, 0]]",
        "no idea",
    ];
    let outcomes: Vec<_> = replies.iter().map(|r| parse_cascade(r, 3, 3)).collect();
    let scored: Vec<_> = outcomes.iter().map(|o| (o.matrix(), &truth)).collect();
    let agg = Aggregate::compute(3, 3, &scored)?;

    println!("exact match   {:.3}", agg.exact_match);
    println!("cell accuracy {:.3} (random baseline {:.3})", agg.cell_accuracy, random_baseline(3));
    println!("parse failures {}", agg.parse_failures);
    for (color, iou) in &agg.iou {
        println!("IoU color {color}: {}", iou.map_or("undefined".into(), |v| format!("{v:.3}")));
    }
    let grid = agg.accuracy_grid()?;
    for r in 0..3 {
        let row: Vec<String> = (0..3)
            .map(|c| format!("{:.2}", grid.accuracy(r, c).unwrap_or(f64::NAN)))
            .collect();
        println!("{}", row.join(" "));
    }
    Ok(())
}
