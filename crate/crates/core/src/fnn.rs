//! Three-layer feed-forward regression network (sigmoid hidden layer, single
//! linear output) trained with Levenberg-Marquardt backpropagation. Three
//! independently trained models map compressed Gerschgorin radii to the
//! alpha, beta and gamma feature estimates.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{invalid, Error, Result};
use crate::mat::{cholesky_solve, RealMatrix};
use crate::subspace::FeatureFamily;

/// Input normalization applied before the network. Dividing by the largest
/// radius makes the features invariant to the absolute signal/noise scale,
/// which is what removes the SNR dependence without knowing the noise
/// power; the subsequent log compression spreads the small-radius region
/// the circle counting depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputNorm {
    LogMaxRadius,
}

/// Weights of one trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// hidden x input.
    pub w1: RealMatrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub input_norm: InputNorm,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl NetworkModel {
    pub fn parameter_count(&self) -> usize {
        self.hidden_dim * self.input_dim + 2 * self.hidden_dim + 1
    }
}

/// Network output on an already normalized input vector.
pub fn eval_normalized(model: &NetworkModel, z: &[f64]) -> f64 {
    let mut out = model.b2;
    for h in 0..model.hidden_dim {
        let a: f64 = model.w1.row(h).iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + model.b1[h];
        out += model.w2[h] * sigmoid(a);
    }
    out
}

/// Feature estimate for a raw radii vector: the input is divided by its
/// maximum component (an all-zero vector stays zero), then evaluated.
pub fn forward(model: &NetworkModel, radii: &[f64]) -> Result<f64> {
    if radii.len() != model.input_dim {
        return Err(invalid(format!(
            "forward: {} radii for an input dimension of {}",
            radii.len(),
            model.input_dim
        )));
    }
    Ok(eval_normalized(model, &normalize_radii(radii)))
}

/// Max-radius normalization used for both training rows and inference:
/// radii are divided by the largest component, then log-compressed onto
/// [0, 1] (12 decades of dynamic range). Dividing by the maximum removes
/// the absolute SNR/power scale; the logarithm spreads the near-zero
/// region where the signal/noise circle distinction lives, which raw
/// ratios squeeze beyond what a sigmoid layer can resolve.
pub fn normalize_radii(radii: &[f64]) -> Vec<f64> {
    const DECADES: f64 = 12.0;
    let max = radii.iter().fold(0.0f64, |a, &b| a.max(b));
    if max > 0.0 {
        radii
            .iter()
            .map(|r| {
                let ratio = (r / max).max(10f64.powf(-DECADES));
                1.0 + ratio.log10() / DECADES
            })
            .collect()
    } else {
        vec![0.0; radii.len()]
    }
}

/// Labeled training rows for one feature family.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub family: FeatureFamily,
    pub input_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(family: FeatureFamily, input_dim: usize) -> Self {
        Self { family, input_dim, inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn push(&mut self, input: &[f64], target: f64) {
        assert_eq!(input.len(), self.input_dim);
        self.inputs.extend_from_slice(input);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

/// One accepted Levenberg-Marquardt step.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub final_train_mse: f64,
    pub best_validation_mse: Option<f64>,
    /// Set when the sample count is below ten times the parameter count.
    pub sample_warning: bool,
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e10;

/// Parameter vector layout used by the trainer: w1 row-major, then b1, w2,
/// b2. Exposed for gradient verification.
pub fn flatten_params(model: &NetworkModel) -> Vec<f64> {
    let mut theta = Vec::with_capacity(model.parameter_count());
    theta.extend_from_slice(model.w1.data());
    theta.extend_from_slice(&model.b1);
    theta.extend_from_slice(&model.w2);
    theta.push(model.b2);
    theta
}

pub fn unflatten_params(theta: &[f64], input_dim: usize, hidden_dim: usize) -> NetworkModel {
    assert_eq!(theta.len(), hidden_dim * input_dim + 2 * hidden_dim + 1);
    let mut w1 = RealMatrix::zeros(hidden_dim, input_dim);
    w1.data_mut().copy_from_slice(&theta[..hidden_dim * input_dim]);
    let b1 = theta[hidden_dim * input_dim..hidden_dim * input_dim + hidden_dim].to_vec();
    let w2 =
        theta[hidden_dim * input_dim + hidden_dim..hidden_dim * input_dim + 2 * hidden_dim].to_vec();
    let b2 = theta[theta.len() - 1];
    NetworkModel { input_dim, hidden_dim, w1, b1, w2, b2, input_norm: InputNorm::LogMaxRadius }
}

/// d f / d theta at one input, in `flatten_params` order.
pub fn network_gradient(model: &NetworkModel, z: &[f64], grad: &mut [f64]) {
    let (h, d) = (model.hidden_dim, model.input_dim);
    debug_assert_eq!(grad.len(), model.parameter_count());
    for hh in 0..h {
        let a: f64 =
            model.w1.row(hh).iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + model.b1[hh];
        let s = sigmoid(a);
        let ds = s * (1.0 - s);
        let back = model.w2[hh] * ds;
        for i in 0..d {
            grad[hh * d + i] = back * z[i];
        }
        grad[h * d + hh] = back;
        grad[h * d + h + hh] = s;
    }
    grad[h * d + 2 * h] = 1.0;
}

fn sum_sq_error(model: &NetworkModel, data: &TrainingSet, idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| {
            let e = eval_normalized(model, data.input(i)) - data.target(i);
            e * e
        })
        .sum()
}

const GRAM_BLOCK: usize = 64;

/// Accumulates G = J^T J and g = J^T e over the training rows.
fn accumulate_normal_equations(
    model: &NetworkModel,
    data: &TrainingSet,
    idx: &[usize],
    gram: &mut RealMatrix,
    grad_vec: &mut [f64],
) -> f64 {
    let p = model.parameter_count();
    gram.data_mut().fill(0.0);
    grad_vec.fill(0.0);
    let mut loss = 0.0;
    let mut block = vec![0.0f64; p * GRAM_BLOCK];
    let mut row = vec![0.0f64; p];
    for chunk in idx.chunks(GRAM_BLOCK) {
        let width = chunk.len();
        for (s, &i) in chunk.iter().enumerate() {
            let z = data.input(i);
            network_gradient(model, z, &mut row);
            let e = eval_normalized(model, z) - data.target(i);
            loss += e * e;
            for q in 0..p {
                block[q * GRAM_BLOCK + s] = row[q];
            }
            for q in 0..p {
                grad_vec[q] += row[q] * e;
            }
        }
        for i in 0..p {
            let bi = &block[i * GRAM_BLOCK..i * GRAM_BLOCK + width];
            for j in i..p {
                let bj = &block[j * GRAM_BLOCK..j * GRAM_BLOCK + width];
                let dot: f64 = bi.iter().zip(bj).map(|(a, b)| a * b).sum();
                gram[(i, j)] += dot;
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    loss
}

/// Levenberg-Marquardt training with a 90/10 train/validation split.
/// The damping factor shrinks by 10 on accepted steps and grows by 10 on
/// rejected ones; training stops on a small gradient, an overflowing
/// damping factor or the epoch limit, and the weights with the best
/// validation loss are returned.
pub fn train_lm(
    data: &TrainingSet,
    hidden_dim: usize,
    seed: u64,
    max_epochs: usize,
    tol: f64,
) -> Result<(NetworkModel, TrainingReport)> {
    if !(2..=64).contains(&hidden_dim) {
        return Err(invalid(format!("hidden_dim {hidden_dim} out of range")));
    }
    if data.is_empty() {
        return Err(invalid("train_lm: empty training set"));
    }
    let n = data.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    let d = data.input_dim;
    let bound1 = 1.0 / (d as f64).sqrt();
    let bound2 = 1.0 / (hidden_dim as f64).sqrt();
    let mut model = NetworkModel {
        input_dim: d,
        hidden_dim,
        w1: RealMatrix::from_fn(hidden_dim, d, |_, _| rng.random_range(-bound1..bound1)),
        b1: (0..hidden_dim).map(|_| rng.random_range(-bound1..bound1)).collect(),
        w2: (0..hidden_dim).map(|_| rng.random_range(-bound2..bound2)).collect(),
        b2: rng.random_range(-bound2..bound2),
        input_norm: InputNorm::LogMaxRadius,
    };
    let p = model.parameter_count();
    let sample_warning = n < 10 * p;

    // Deterministic shuffle, last tenth goes to validation.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let val_count = if n >= 10 { n / 10 } else { 0 };
    let (train_idx, val_idx) = order.split_at(n - val_count);

    let mut lambda = LAMBDA_INIT;
    let mut gram = RealMatrix::zeros(p, p);
    let mut grad_vec = vec![0.0f64; p];
    let mut loss = {
        let l = sum_sq_error(&model, data, train_idx);
        if !l.is_finite() {
            return Err(Error::Training("non-finite initial loss".into()));
        }
        l
    };

    let mut best = model.clone();
    let mut best_val = if val_idx.is_empty() {
        None
    } else {
        Some(sum_sq_error(&model, data, val_idx) / val_idx.len() as f64)
    };
    let mut best_train = loss;
    let mut report = TrainingReport {
        epochs: Vec::new(),
        final_train_mse: loss / train_idx.len() as f64,
        best_validation_mse: best_val,
        sample_warning,
    };

    for epoch in 0..max_epochs {
        let recomputed =
            accumulate_normal_equations(&model, data, train_idx, &mut gram, &mut grad_vec);
        if !recomputed.is_finite() || grad_vec.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite residuals at epoch {epoch} (loss {recomputed})"
            )));
        }
        loss = recomputed;
        let grad_norm = grad_vec.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if grad_norm < tol {
            break;
        }

        // Try steps with growing damping until one reduces the loss.
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = gram.clone();
            for i in 0..p {
                damped[(i, i)] += lambda;
            }
            let rhs: Vec<f64> = grad_vec.iter().map(|g| -g).collect();
            let step = match cholesky_solve(&damped, &rhs) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut theta = flatten_params(&model);
            for (t, s) in theta.iter_mut().zip(&step) {
                *t += s;
            }
            let candidate = unflatten_params(&theta, d, hidden_dim);
            let new_loss = sum_sq_error(&candidate, data, train_idx);
            if new_loss.is_finite() && new_loss < loss {
                model = candidate;
                loss = new_loss;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break; // damping overflow: no descent direction left
        }

        let train_mse = loss / train_idx.len() as f64;
        report.epochs.push(EpochRecord { epoch, train_mse, lambda });
        if val_idx.is_empty() {
            if loss <= best_train {
                best_train = loss;
                best = model.clone();
            }
        } else {
            let val_mse = sum_sq_error(&model, data, val_idx) / val_idx.len() as f64;
            if best_val.is_none_or(|b| val_mse < b) {
                best_val = Some(val_mse);
                best = model.clone();
            }
        }
    }

    report.final_train_mse = sum_sq_error(&best, data, train_idx) / train_idx.len() as f64;
    report.best_validation_mse = best_val;
    Ok((best, report))
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes a model as a line-oriented text file. Floats use the shortest
/// representation that round-trips, so load(save(m)) is bit-exact for
/// finite weights.
pub fn save_model(model: &NetworkModel, w: &mut impl Write) -> Result<()> {
    writeln!(w, "format_version = {MODEL_FORMAT_VERSION}")?;
    writeln!(w, "input_norm = log-max-radius")?;
    writeln!(w, "input_dim = {}", model.input_dim)?;
    writeln!(w, "hidden_dim = {}", model.hidden_dim)?;
    let join = |vals: &[f64]| {
        vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
    };
    writeln!(w, "w1 = {}", join(model.w1.data()))?;
    writeln!(w, "b1 = {}", join(&model.b1))?;
    writeln!(w, "w2 = {}", join(&model.w2))?;
    writeln!(w, "b2 = {}", model.b2)?;
    Ok(())
}

pub fn save_model_file(model: &NetworkModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    save_model(model, &mut f)
}

pub fn load_model(r: &mut impl Read) -> Result<NetworkModel> {
    let reader = BufReader::new(r);
    let mut fields: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Format(format!("model file: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("model file: malformed line `{line}`")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |k: &str| {
        fields.get(k).ok_or_else(|| Error::Format(format!("model file: missing field `{k}`")))
    };
    let version: u32 = get("format_version")?
        .parse()
        .map_err(|_| Error::Format("model file: bad format_version".into()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model file: version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    if get("input_norm")? != "log-max-radius" {
        return Err(Error::Format("model file: unknown input_norm".into()));
    }
    let input_dim: usize =
        get("input_dim")?.parse().map_err(|_| Error::Format("bad input_dim".into()))?;
    let hidden_dim: usize =
        get("hidden_dim")?.parse().map_err(|_| Error::Format("bad hidden_dim".into()))?;
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::Format("model file: zero dimensions".into()));
    }
    let parse_vec = |k: &str, want: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = get(k)?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad float in `{k}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != want {
            return Err(Error::Format(format!(
                "model file: `{k}` has {} values, expected {want}",
                vals.len()
            )));
        }
        Ok(vals)
    };
    let w1_data = parse_vec("w1", hidden_dim * input_dim)?;
    let b1 = parse_vec("b1", hidden_dim)?;
    let w2 = parse_vec("w2", hidden_dim)?;
    let b2: f64 = get("b2")?.parse().map_err(|_| Error::Format("bad b2".into()))?;
    let mut w1 = RealMatrix::zeros(hidden_dim, input_dim);
    w1.data_mut().copy_from_slice(&w1_data);
    Ok(NetworkModel { input_dim, hidden_dim, w1, b1, w2, b2, input_norm: InputNorm::LogMaxRadius })
}

pub fn load_model_file(path: &Path) -> Result<NetworkModel> {
    let mut f = std::fs::File::open(path)?;
    load_model(&mut f)
}
