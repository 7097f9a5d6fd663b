//! Probe checkpoints: one G2MF tensor holding every parameter plus a JSON
//! sidecar with shapes and hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::g2mf::Tensor;
use super::model::ProbeParams;
use super::train::{TrainConfig, TrainLog};
use super::ProbeError;

pub const WEIGHTS_FILE: &str = "probe.g2mf";
pub const META_FILE: &str = "probe.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub n: usize,
    pub drop_leading: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub config: TrainConfig,
    pub best: Option<super::train::EvalPoint>,
    pub iterations: usize,
}

impl CheckpointMeta {
    pub fn new(params: &ProbeParams<f32>, n: usize, drop_leading: usize, config: &TrainConfig, log: &TrainLog) -> Self {
        Self {
            input_dim: params.input_dim(),
            hidden: params.hidden(),
            classes: params.classes(),
            n,
            drop_leading,
            bn_momentum: params.bn_momentum,
            bn_eps: params.bn_eps,
            config: config.clone(),
            best: log.best,
            iterations: log.iterations,
        }
    }
}

fn flatten(params: &ProbeParams<f32>) -> Vec<f32> {
    let mut out = Vec::new();
    out.extend(params.conv1_weight.iter());
    out.extend(params.conv1_bias.iter());
    out.extend(params.bn_weight.iter());
    out.extend(params.bn_bias.iter());
    out.extend(params.running_mean.iter());
    out.extend(params.running_var.iter());
    out.extend(params.conv2_weight.iter());
    out.extend(params.conv2_bias.iter());
    out
}

fn unflatten(meta: &CheckpointMeta, data: &[f32]) -> Result<ProbeParams<f32>, ProbeError> {
    let (d, h, c) = (meta.input_dim, meta.hidden, meta.classes);
    let expected = h * d + 5 * h + c * h + c;
    if data.len() != expected {
        return Err(ProbeError::Shape(format!(
            "checkpoint holds {} values, metadata implies {expected}",
            data.len()
        )));
    }
    let mut rest = data;
    let mut take = |len: usize| {
        let (head, tail) = rest.split_at(len);
        rest = tail;
        head.to_vec()
    };
    let conv1_weight = Array2::from_shape_vec((h, d), take(h * d)).expect("sized");
    let conv1_bias = Array1::from(take(h));
    let bn_weight = Array1::from(take(h));
    let bn_bias = Array1::from(take(h));
    let running_mean = Array1::from(take(h));
    let running_var = Array1::from(take(h));
    let conv2_weight = Array2::from_shape_vec((c, h), take(c * h)).expect("sized");
    let conv2_bias = Array1::from(take(c));
    let params = ProbeParams {
        conv1_weight,
        conv1_bias,
        bn_weight,
        bn_bias,
        running_mean,
        running_var,
        conv2_weight,
        conv2_bias,
        bn_momentum: meta.bn_momentum,
        bn_eps: meta.bn_eps,
    };
    if !params.is_finite() {
        return Err(ProbeError::Shape("checkpoint has non-finite values or non-positive running variance".into()));
    }
    Ok(params)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProbeError + '_ {
    move |source| ProbeError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `probe.g2mf` and `probe.json` into `dir`, creating it if needed.
pub fn save(dir: &Path, params: &ProbeParams<f32>, meta: &CheckpointMeta) -> Result<(PathBuf, PathBuf), ProbeError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let weights = dir.join(WEIGHTS_FILE);
    let sidecar = dir.join(META_FILE);
    let flat = flatten(params);
    let len = flat.len();
    Tensor::new(vec![len], flat)?.save(&weights)?;
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(&sidecar, json + "\n").map_err(io_err(&sidecar))?;
    Ok((weights, sidecar))
}

pub fn load(dir: &Path) -> Result<(ProbeParams<f32>, CheckpointMeta), ProbeError> {
    let sidecar = dir.join(META_FILE);
    let text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let tensor = Tensor::load(&dir.join(WEIGHTS_FILE))?;
    if tensor.dims().len() != 1 {
        return Err(ProbeError::Shape("checkpoint tensor must be rank 1".into()));
    }
    let params = unflatten(&meta, tensor.data())?;
    Ok((params, meta))
}
