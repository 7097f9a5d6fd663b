//! Seeded probe training and evaluation.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{interpolate, load_features, FeatureMap};
use super::model::{argmax_rows, cross_entropy, ProbeParams, DEFAULT_HIDDEN};
use super::optim::{AdamW, LrSchedule};
use super::ProbeError;
use crate::dataset::DatasetManifest;
use crate::matrix::{ColorMatrix, Matrix};
use crate::metrics::{AccuracyGrid, Aggregate};
use crate::parser::ParsedMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_iters: usize,
    pub warmup_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Validation interval in iterations.
    pub eval_every: usize,
    /// Stop once validation cell accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Stop after this many validation passes without the best accuracy
    /// improving by more than `min_improvement`.
    pub patience: Option<usize>,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 1e-4,
            batch: 32,
            max_iters: 5000,
            warmup_fraction: 0.05,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            eval_every: 100,
            target_accuracy: None,
            patience: None,
            min_improvement: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |msg: &str| Err(ProbeError::Config(msg.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch == 0 || self.max_iters == 0 || self.hidden == 0 || self.eval_every == 0 {
            return bad("batch, max_iters, hidden and eval_every must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if self.patience == Some(0) || !(self.min_improvement >= 0.0) {
            return bad("patience must be positive and min_improvement non-negative");
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return bad("target_accuracy must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.warmup_fraction, self.max_iters)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: FeatureMap,
    pub labels: ColorMatrix,
}

/// Labelled feature maps, either held in memory or read per sample from
/// `<features_dir>/<id>.g2mf`.
#[derive(Debug, Clone)]
pub enum SampleSource {
    Memory(Vec<Sample>),
    Disk {
        records: Vec<(String, ColorMatrix)>,
        features_dir: PathBuf,
        drop_leading: usize,
    },
}

impl SampleSource {
    pub fn from_manifest(manifest: &DatasetManifest, features_dir: &Path, drop_leading: usize) -> Self {
        SampleSource::Disk {
            records: manifest
                .records
                .iter()
                .map(|r| (r.id.clone(), r.matrix.clone()))
                .collect(),
            features_dir: features_dir.to_path_buf(),
            drop_leading,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SampleSource::Memory(s) => s.len(),
            SampleSource::Disk { records, .. } => records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, i: usize) -> &str {
        match self {
            SampleSource::Memory(s) => &s[i].id,
            SampleSource::Disk { records, .. } => &records[i].0,
        }
    }

    pub fn labels(&self, i: usize) -> &ColorMatrix {
        match self {
            SampleSource::Memory(s) => &s[i].labels,
            SampleSource::Disk { records, .. } => &records[i].1,
        }
    }

    pub fn features(&self, i: usize) -> Result<FeatureMap, ProbeError> {
        match self {
            SampleSource::Memory(s) => Ok(s[i].features.clone()),
            SampleSource::Disk {
                records,
                features_dir,
                drop_leading,
            } => {
                let path = features_dir.join(format!("{}.g2mf", records[i].0));
                load_features(&path)?.into_map(*drop_leading)
            }
        }
    }

    /// Grid side shared by every sample.
    pub fn grid_side(&self) -> Result<usize, ProbeError> {
        let first = self.labels(0).rows();
        for i in 0..self.len() {
            let shape = self.labels(i).shape();
            if shape != (first, first) {
                return Err(ProbeError::Shape(format!(
                    "sample {} is {}x{}, expected {first}x{first}",
                    self.id(i),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(first)
    }

    /// Position-major inputs and flattened labels for the given samples,
    /// each feature map resized to `n x n`.
    fn batch(&self, indices: &[usize], n: usize) -> Result<(Array2<f32>, Vec<u8>), ProbeError> {
        let mut d = None;
        let mut x = Vec::new();
        let mut labels = Vec::with_capacity(indices.len() * n * n);
        for &i in indices {
            let fm = self.features(i)?;
            if *d.get_or_insert(fm.channels()) != fm.channels() {
                return Err(ProbeError::Shape(format!(
                    "sample {} has {} channels, expected {}",
                    self.id(i),
                    fm.channels(),
                    d.unwrap_or(0)
                )));
            }
            let target = self.labels(i);
            if target.shape() != (n, n) {
                return Err(ProbeError::Shape(format!("labels for {} are not {n}x{n}", self.id(i))));
            }
            x.extend(interpolate(&fm, n).to_positions());
            labels.extend_from_slice(target.as_slice());
        }
        let d = d.unwrap_or(0);
        let x = Array2::from_shape_vec((labels.len(), d), x).expect("consistent batch");
        Ok((x, labels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub cell_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    /// Training loss at every iteration run.
    pub losses: Vec<f64>,
    pub evals: Vec<EvalPoint>,
    pub best: Option<EvalPoint>,
    pub iterations: usize,
    pub stopped_early: bool,
}

/// Trains a probe for `classes` colors. With a validation source, the
/// parameters with the best validation cell accuracy are returned;
/// otherwise the final parameters.
pub fn train(
    config: &TrainConfig,
    train_set: &SampleSource,
    val_set: Option<&SampleSource>,
    classes: usize,
) -> Result<(ProbeParams<f32>, TrainLog), ProbeError> {
    train_with_progress(config, train_set, val_set, classes, |_, _| {})
}

/// [`train`] with a callback invoked after every validation pass with the
/// evaluation point and the mean training loss since the previous one.
pub fn train_with_progress(
    config: &TrainConfig,
    train_set: &SampleSource,
    val_set: Option<&SampleSource>,
    classes: usize,
    mut on_eval: impl FnMut(&EvalPoint, f64),
) -> Result<(ProbeParams<f32>, TrainLog), ProbeError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ProbeError::Config("training set is empty".into()));
    }
    if classes == 0 || classes > usize::from(u8::MAX) {
        return Err(ProbeError::Config(format!("unsupported class count {classes}")));
    }
    let n = train_set.grid_side()?;
    if let Some(val) = val_set.filter(|v| !v.is_empty()) {
        let vn = val.grid_side()?;
        if vn != n {
            return Err(ProbeError::Shape(format!("validation grids are {vn}x{vn}, training {n}x{n}")));
        }
    }
    let d = train_set.features(0)?.channels();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ProbeParams::<f32>::init(d, config.hidden, classes, &mut rng);
    let mut opt = AdamW::new(&params, config.weight_decay);
    let schedule = config.schedule();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut log = TrainLog::default();
    let mut best: Option<(EvalPoint, ProbeParams<f32>)> = None;
    let mut stale = 0usize;

    for iteration in 0..config.max_iters {
        let mut indices = Vec::with_capacity(config.batch);
        while indices.len() < config.batch.min(train_set.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            indices.push(order[cursor]);
            cursor += 1;
        }
        let (x, labels) = train_set.batch(&indices, n)?;
        let (logits, cache) = params.forward_train(x.view())?;
        let (loss, grad_logits) = cross_entropy(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(ProbeError::Diverged { iteration, loss });
        }
        let grads = params.backward(x.view(), &cache, &grad_logits);
        params.update_running_stats(&cache.stats);
        opt.step(&mut params, &grads, schedule.at(iteration));
        if !params.is_finite() {
            return Err(ProbeError::Diverged { iteration, loss: f64::NAN });
        }
        log.losses.push(loss);
        log.iterations = iteration + 1;

        let last = iteration + 1 == config.max_iters;
        let Some(val) = val_set.filter(|v| !v.is_empty()) else {
            continue;
        };
        if (iteration + 1) % config.eval_every != 0 && !last {
            continue;
        }
        let point = EvalPoint {
            iteration: iteration + 1,
            cell_accuracy: cell_accuracy(&params, val, n)?,
        };
        let since = log.evals.last().map_or(0, |p| p.iteration);
        let recent = &log.losses[since..];
        on_eval(&point, recent.iter().sum::<f64>() / recent.len() as f64);
        log.evals.push(point);
        let best_acc = best.as_ref().map_or(f64::NEG_INFINITY, |(b, _)| b.cell_accuracy);
        if point.cell_accuracy > best_acc + config.min_improvement {
            stale = 0;
        } else {
            stale += 1;
        }
        if point.cell_accuracy > best_acc {
            best = Some((point, params.clone()));
        }
        let reached = config.target_accuracy.is_some_and(|t| point.cell_accuracy >= t);
        let exhausted = config.patience.is_some_and(|p| stale >= p);
        if reached || exhausted {
            log.stopped_early = !last;
            break;
        }
    }

    Ok(match best {
        Some((point, best_params)) => {
            log.best = Some(point);
            (best_params, log)
        }
        None => (params, log),
    })
}

/// Predicted color matrix for one feature map.
pub fn predict(params: &ProbeParams<f32>, features: &FeatureMap, n: usize) -> Result<ColorMatrix, ProbeError> {
    let positions = interpolate(features, n).to_positions();
    let x = Array2::from_shape_vec((n * n, features.channels()), positions).expect("consistent map");
    let logits = params.forward_eval(x.view())?;
    Ok(Matrix::from_flat(n, n, argmax_rows(&logits)).expect("n*n predictions"))
}

fn cell_accuracy(params: &ProbeParams<f32>, set: &SampleSource, n: usize) -> Result<f64, ProbeError> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..set.len() {
        let pred = predict(params, &set.features(i)?, n)?;
        let truth = set.labels(i);
        hits += pred.as_slice().iter().zip(truth.as_slice()).filter(|(a, b)| a == b).count();
        total += truth.as_slice().len();
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEvaluation {
    pub aggregate: Aggregate,
    pub grid: AccuracyGrid,
    pub predictions: Vec<(String, ColorMatrix)>,
}

/// Scores the probe on every sample of `set` (grids must be `n x n`).
pub fn evaluate(
    params: &ProbeParams<f32>,
    set: &SampleSource,
    n: usize,
    classes: usize,
) -> Result<ProbeEvaluation, ProbeError> {
    let mut predictions = Vec::with_capacity(set.len());
    let mut parsed: Vec<ParsedMatrix> = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let truth = set.labels(i);
        if truth.shape() != (n, n) {
            return Err(ProbeError::Shape(format!(
                "labels for {} are {}x{}, expected {n}x{n}",
                set.id(i),
                truth.rows(),
                truth.cols()
            )));
        }
        let pred = predict(params, &set.features(i)?, n)?;
        parsed.push(pred.map(i64::from));
        predictions.push((set.id(i).to_string(), pred));
    }
    let scored: Vec<_> = parsed
        .iter()
        .enumerate()
        .map(|(i, p)| (Some(p), set.labels(i)))
        .collect();
    let aggregate = Aggregate::compute(n, classes, &scored)?;
    let grid = aggregate.accuracy_grid()?;
    Ok(ProbeEvaluation {
        aggregate,
        grid,
        predictions,
    })
}
