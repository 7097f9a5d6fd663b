//! Helpers shared by the integration tests: the parser golden corpus and a
//! brute-force metric oracle.
#![allow(dead_code)]

use grid2matrix::metrics::{accumulate_heatmap, cell_accuracy, color_iou, exact_match, Aggregate};
use grid2matrix::parser::{normalize, parse_cascade, parse_flatten, parse_rowwise, parse_strict, ParseOutcome, ParsedMatrix};
use grid2matrix::ColorMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
pub struct Case {
    pub name: String,
    pub op: String,
    pub text: String,
    pub h: usize,
    pub w: usize,
    pub expected: serde_json::Value,
}

#[derive(Deserialize)]
struct Corpus {
    cases: Vec<Case>,
}

pub fn corpus() -> Vec<Case> {
    let raw = include_str!("../golden/parser_corpus.json");
    serde_json::from_str::<Corpus>(raw).expect("corpus parses").cases
}

pub fn run(case: &Case) -> serde_json::Value {
    let outcome: ParseOutcome = match case.op.as_str() {
        "normalize" => return serde_json::Value::String(normalize(&case.text)),
        "strict" => parse_strict(&case.text, case.h, case.w),
        "rowwise" => parse_rowwise(&case.text, case.h, case.w),
        "flatten" => parse_flatten(&case.text, case.h, case.w),
        "cascade" => parse_cascade(&case.text, case.h, case.w),
        other => panic!("unknown op {other}"),
    };
    serde_json::to_value(outcome).unwrap()
}

/// Names and details of every case whose output differs from the golden.
pub fn corpus_mismatches(cases: &[Case]) -> Vec<String> {
    cases
        .iter()
        .filter_map(|c| {
            let got = run(c);
            (got != c.expected).then(|| format!("{}: expected {} got {}", c.name, c.expected, got))
        })
        .collect()
}

pub struct Batch {
    pub n: usize,
    pub c: usize,
    pub pairs: Vec<(Option<ParsedMatrix>, ColorMatrix)>,
}

/// Random batches totalling `batches * per_batch` pairs. Predictions mix
/// exact copies, noisy copies with out-of-range entries, wrong shapes and
/// parse failures.
pub fn random_batches(seed: u64, batches: usize, per_batch: usize) -> Vec<Batch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batches)
        .map(|_| {
            let n = rng.gen_range(1..=6);
            let c = rng.gen_range(3..=10);
            let pairs = (0..per_batch)
                .map(|_| {
                    let truth: Vec<u8> = (0..n * n).map(|_| rng.gen_range(0..c as u8)).collect();
                    let pred = match rng.gen_range(0..10) {
                        0 => None,
                        1 => {
                            let h = n + 1;
                            let vals = (0..h * n).map(|_| rng.gen_range(0..c as i64)).collect();
                            Some(ParsedMatrix::from_flat(h, n, vals).unwrap())
                        }
                        2 => Some(ParsedMatrix::from_flat(n, n, truth.iter().map(|&t| i64::from(t)).collect()).unwrap()),
                        _ => {
                            let flip = rng.gen_range(0.0..1.0);
                            let vals = truth
                                .iter()
                                .map(|&t| {
                                    if rng.gen_bool(flip) {
                                        rng.gen_range(-1..c as i64 + 2)
                                    } else {
                                        i64::from(t)
                                    }
                                })
                                .collect();
                            Some(ParsedMatrix::from_flat(n, n, vals).unwrap())
                        }
                    };
                    (pred, ColorMatrix::from_flat(n, n, truth).unwrap())
                })
                .collect();
            Batch { n, c, pairs }
        })
        .collect()
}

fn same_shape(pred: &Option<ParsedMatrix>, truth: &ColorMatrix) -> Option<Vec<Vec<i64>>> {
    let p = pred.as_ref()?;
    let rows = p.to_rows();
    let t = truth.to_rows();
    (rows.len() == t.len() && rows.iter().zip(&t).all(|(a, b)| a.len() == b.len())).then_some(rows)
}

/// Compares every metric against nested-loop counting. Returns the number
/// of pairs checked or the first disagreement.
pub fn check_batches(batches: &[Batch]) -> Result<usize, String> {
    let mut checked = 0;
    for (bi, batch) in batches.iter().enumerate() {
        let n = batch.n;
        let mut hits = vec![vec![0u64; n]; n];
        let mut tp = vec![0u64; batch.c];
        let mut fp = vec![0u64; batch.c];
        let mut fn_ = vec![0u64; batch.c];
        let mut exact_count = 0usize;
        let mut correct_total = 0usize;
        for (pred, truth) in &batch.pairs {
            let t = truth.to_rows();
            let mut correct = 0usize;
            if let Some(p) = same_shape(pred, truth) {
                for r in 0..n {
                    for col in 0..n {
                        let (pv, tv) = (p[r][col], i64::from(t[r][col]));
                        if pv == tv {
                            correct += 1;
                            hits[r][col] += 1;
                        }
                        for k in 0..batch.c {
                            let k64 = k as i64;
                            if pv == k64 && tv == k64 {
                                tp[k] += 1;
                            } else if pv == k64 {
                                fp[k] += 1;
                            } else if tv == k64 {
                                fn_[k] += 1;
                            }
                        }
                    }
                }
            }
            let exact = correct == n * n;
            let acc = correct as f64 / (n * n) as f64;
            if exact_match(pred.as_ref(), truth) != exact {
                return Err(format!("batch {bi}: exact match disagrees"));
            }
            if cell_accuracy(pred.as_ref(), truth) != acc {
                return Err(format!("batch {bi}: cell accuracy disagrees"));
            }
            exact_count += usize::from(exact);
            correct_total += correct;
            checked += 1;
        }
        let scored: Vec<_> = batch.pairs.iter().map(|(p, t)| (p.as_ref(), t)).collect();
        let grid = accumulate_heatmap(&scored).map_err(|e| e.to_string())?;
        let flat_hits: Vec<u64> = hits.iter().flatten().copied().collect();
        if grid.hits() != flat_hits.as_slice() || grid.totals().iter().any(|&t| t != batch.pairs.len() as u64) {
            return Err(format!("batch {bi}: heatmap counts disagree"));
        }
        let agg = Aggregate::compute(n, batch.c, &scored).map_err(|e| e.to_string())?;
        for k in 0..batch.c {
            let denom = tp[k] + fp[k] + fn_[k];
            let expected = (denom > 0).then(|| tp[k] as f64 / denom as f64);
            let got = color_iou(&scored, k, batch.c).map_err(|e| e.to_string())?;
            if got != expected || agg.iou[&k.to_string()] != expected {
                return Err(format!("batch {bi}: IoU of color {k} disagrees"));
            }
        }
        let count = batch.pairs.len();
        if agg.exact_match != exact_count as f64 / count as f64
            || agg.cell_accuracy != correct_total as f64 / (count * n * n) as f64
            || agg.parse_failures != batch.pairs.iter().filter(|(p, _)| p.is_none()).count()
        {
            return Err(format!("batch {bi}: aggregate disagrees"));
        }
    }
    Ok(checked)
}
