//! Feed-forward demand forecaster trained by mini-batch gradient descent on
//! the mean squared error.
//!
//! Hidden layers use ReLU, the output layer is affine. Demands are clamped at
//! zero only at inference time, so training sees the plain quadratic loss and
//! its exact gradient.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::workload::{DemandVector, FeatureVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Default layer shape: 8 features, two hidden layers, 3 demand outputs.
pub const DEFAULT_LAYERS: [usize; 4] = [8, 32, 16, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Per-column standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Normalization<T> {
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub target_mean: Vec<T>,
    pub target_std: Vec<T>,
}

fn column_stats<T: Real>(rows: &[&[T]], width: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_count(rows.len());
    let mut mean = vec![T::zero(); width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m = *m + *v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); width];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s = *s + (*v - *m) * (*v - *m);
        }
    }
    // constant columns are left unscaled
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > T::lit(1e-12) {
                sd
            } else {
                T::one()
            }
        })
        .collect();
    (mean, std)
}

impl<T: Real> Normalization<T> {
    pub fn fit(dataset: &[(FeatureVector<T>, DemandVector<T>)]) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let width = dataset[0].0.values.len();
        let inputs: Vec<&[T]> = dataset.iter().map(|(x, _)| x.values.as_slice()).collect();
        let targets: Vec<[T; 3]> = dataset.iter().map(|(_, y)| y.to_array()).collect();
        let target_rows: Vec<&[T]> = targets.iter().map(|t| t.as_slice()).collect();
        let (input_mean, input_std) = column_stats(&inputs, width);
        let (target_mean, target_std) = column_stats(&target_rows, 3);
        Ok(Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        })
    }

    fn scale_input(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (*v - *m) / *s)
            .collect()
    }

    fn scale_target(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.target_mean.iter().zip(&self.target_std))
            .map(|(v, (m, s))| (*v - *m) / *s)
            .collect()
    }

    fn unscale_target(&self, y: &mut [T]) {
        for (v, (m, s)) in y
            .iter_mut()
            .zip(self.target_mean.iter().zip(&self.target_std))
        {
            *v = *v * *s + *m;
        }
    }
}

/// Weights and biases of the network plus optional normalization statistics.
///
/// `weights[l]` is the row-major `(out × in)` matrix of layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NetworkParams<T> {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    #[serde(default)]
    pub normalization: Option<Normalization<T>>,
}

/// Gradient of the loss with the same shapes as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(params: &NetworkParams<T>) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| vec![T::zero(); w.len()])
                .collect(),
            biases: params
                .biases
                .iter()
                .map(|b| vec![T::zero(); b.len()])
                .collect(),
        }
    }

    /// Every entry, weights of each layer followed by its biases.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::precondition(format!(
            "layer sizes {sizes:?} need at least two entries, all >= 1"
        )));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<T: Real>(layer_sizes: &[usize], seed: u64) -> Result<NetworkParams<T>> {
    validate_sizes(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(
            (0..fan_in * fan_out)
                .map(|_| T::lit(rng.random_range(-bound..=bound)))
                .collect(),
        );
        biases.push(vec![T::zero(); fan_out]);
    }
    Ok(NetworkParams {
        format_version: MODEL_FORMAT_VERSION,
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        hidden_activation: Activation::Relu,
        output_activation: Activation::Linear,
        normalization: None,
    })
}

struct Trace<T> {
    /// Pre-activations per layer.
    z: Vec<Vec<T>>,
    /// Activations, `a[0]` is the input.
    a: Vec<Vec<T>>,
}

fn activate<T: Real>(act: Activation, v: T) -> T {
    match act {
        Activation::Relu => v.max(T::zero()),
        Activation::Linear => v,
    }
}

fn activate_grad<T: Real>(act: Activation, z: T) -> T {
    match act {
        Activation::Relu if z > T::zero() => T::one(),
        Activation::Relu => T::zero(),
        Activation::Linear => T::one(),
    }
}

impl<T: Real> NetworkParams<T> {
    pub fn validate(&self) -> Result<()> {
        validate_sizes(&self.layer_sizes)?;
        let layers = self.layer_sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Dimension {
                expected: layers,
                got: self.weights.len().min(self.biases.len()),
            });
        }
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] {
                return Err(Error::Dimension {
                    expected: pair[0] * pair[1],
                    got: self.weights[l].len(),
                });
            }
            if self.biases[l].len() != pair[1] {
                return Err(Error::Dimension {
                    expected: pair[1],
                    got: self.biases[l].len(),
                });
            }
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::precondition(
                "network contains non-finite parameters",
            ));
        }
        if let Some(n) = &self.normalization {
            if n.input_mean.len() != self.input_dim() || n.input_std.len() != self.input_dim() {
                return Err(Error::Dimension {
                    expected: self.input_dim(),
                    got: n.input_mean.len(),
                });
            }
            if n.target_mean.len() > self.output_dim() || n.target_std.len() != n.target_mean.len()
            {
                return Err(Error::Dimension {
                    expected: self.output_dim(),
                    got: n.target_mean.len(),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[T]) -> Trace<T> {
        let mut z = Vec::with_capacity(self.num_layers());
        let mut a = vec![x.to_vec()];
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let w = &self.weights[l];
            let prev = &a[l];
            let act = self.activation(l);
            let zl: Vec<T> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter()
                        .zip(prev)
                        .fold(self.biases[l][o], |s, (wi, xi)| s + *wi * *xi)
                })
                .collect();
            a.push(zl.iter().map(|v| activate(act, *v)).collect());
            z.push(zl);
        }
        Trace { z, a }
    }

    /// Network output before any clamping or de-normalization.
    pub fn output(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.trace(x).a.pop().unwrap())
    }

    /// Pre-activations of every layer for input `x`.
    pub fn pre_activations(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_input(x)?;
        Ok(self.trace(x).z)
    }

    pub fn with_normalization(mut self, normalization: Option<Normalization<T>>) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: Self = serde_json::from_str(&text)?;
        if params.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::precondition(format!(
                "unsupported model format_version {}",
                params.format_version
            )));
        }
        params.validate()?;
        Ok(params)
    }
}

fn clamp_demand<T: Real>(out: &[T]) -> Result<DemandVector<T>> {
    let mut d = DemandVector::from_slice(out)?;
    d.cpu_demand = d.cpu_demand.max(T::zero());
    d.gpu_demand = d.gpu_demand.max(T::zero());
    d.bandwidth_demand = d.bandwidth_demand.max(T::zero());
    Ok(d)
}

/// Plain forward pass: the first three outputs, clamped at zero. Ignores any
/// stored normalization; see [`predict_demand`].
pub fn forward<T: Real>(
    params: &NetworkParams<T>,
    x: &FeatureVector<T>,
) -> Result<DemandVector<T>> {
    clamp_demand(&params.output(&x.values)?)
}

/// Forward pass in original units: standardizes the input, inverts the
/// target standardization and clamps demands at zero.
pub fn predict_demand<T: Real>(
    params: &NetworkParams<T>,
    features: &FeatureVector<T>,
) -> Result<DemandVector<T>> {
    params.check_input(&features.values)?;
    let mut out = match &params.normalization {
        Some(n) => params.output(&n.scale_input(&features.values))?,
        None => params.output(&features.values)?,
    };
    if let Some(n) = &params.normalization {
        n.unscale_target(&mut out);
    }
    clamp_demand(&out)
}

/// Mean over samples of the squared Euclidean error.
pub fn mse<T: Real>(predictions: &[DemandVector<T>], actuals: &[DemandVector<T>]) -> Result<T> {
    let p: Vec<[T; 3]> = predictions.iter().map(|d| d.to_array()).collect();
    let a: Vec<[T; 3]> = actuals.iter().map(|d| d.to_array()).collect();
    mse_rows(&p, &a)
}

fn mse_rows<T: Real, R: AsRef<[T]>>(predictions: &[R], actuals: &[R]) -> Result<T> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predictions.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    let mut total = T::zero();
    for (p, a) in predictions.iter().zip(actuals) {
        let (p, a) = (p.as_ref(), a.as_ref());
        if p.len() != a.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                got: p.len(),
            });
        }
        total = total
            + p.iter()
                .zip(a)
                .map(|(x, y)| (*x - *y) * (*x - *y))
                .sum::<T>();
    }
    Ok(total / T::from_count(predictions.len()))
}

/// Batch MSE of the raw network output against raw targets.
pub fn batch_loss<T: Real>(params: &NetworkParams<T>, batch: &[(Vec<T>, Vec<T>)]) -> Result<T> {
    let outputs = batch
        .iter()
        .map(|(x, _)| params.output(x))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<&[T]> = batch.iter().map(|(_, y)| y.as_slice()).collect();
    let outputs: Vec<&[T]> = outputs.iter().map(|o| o.as_slice()).collect();
    mse_rows(&outputs, &targets)
}

/// Analytic gradient of [`batch_loss`] by backpropagation.
pub fn backprop_grads_raw<T: Real>(
    params: &NetworkParams<T>,
    batch: &[(Vec<T>, Vec<T>)],
) -> Result<Gradients<T>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grads = Gradients::zeros_like(params);
    let scale = T::lit(2.0) / T::from_count(batch.len());
    for (x, y) in batch {
        params.check_input(x)?;
        if y.len() != params.output_dim() {
            return Err(Error::Dimension {
                expected: params.output_dim(),
                got: y.len(),
            });
        }
        let tr = params.trace(x);
        let last = params.num_layers() - 1;
        let mut delta: Vec<T> = tr.a[last + 1]
            .iter()
            .zip(y)
            .zip(&tr.z[last])
            .map(|((out, target), z)| {
                scale * (*out - *target) * activate_grad(params.output_activation, *z)
            })
            .collect();
        for l in (0..=last).rev() {
            let n_in = params.layer_sizes[l];
            let prev = &tr.a[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[l][o] = grads.biases[l][o] + *d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g = *g + *d * *a;
                }
            }
            if l > 0 {
                let w = &params.weights[l];
                let act = params.activation(l - 1);
                delta = (0..n_in)
                    .map(|i| {
                        let back = delta
                            .iter()
                            .enumerate()
                            .fold(T::zero(), |s, (o, d)| s + w[o * n_in + i] * *d);
                        back * activate_grad(act, tr.z[l - 1][i])
                    })
                    .collect();
            }
        }
    }
    Ok(grads)
}

/// Gradient of the batch MSE over (features, demand) pairs in the units
/// given; any stored normalization is not applied.
pub fn backprop_grads<T: Real>(
    params: &NetworkParams<T>,
    batch: &[(FeatureVector<T>, DemandVector<T>)],
) -> Result<Gradients<T>> {
    let raw: Vec<(Vec<T>, Vec<T>)> = batch
        .iter()
        .map(|(x, y)| (x.values.clone(), y.to_array().to_vec()))
        .collect();
    backprop_grads_raw(params, &raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub normalize: bool,
    /// Hidden layer widths; input and output widths follow from the data.
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            normalize: true,
            hidden_layers: DEFAULT_LAYERS[1..3].to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: &str| {
            Err(Error::Config {
                path: format!("train.{path}"),
                message: message.into(),
            })
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be finite and >= 0");
        }
        if self.epochs == 0 {
            return err("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be >= 1");
        }
        if self.hidden_layers.contains(&0) {
            return err("hidden_layers", "widths must be >= 1");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(outputs);
        sizes
    }
}

/// MSE of [`predict_demand`] over a dataset, in original units.
pub fn dataset_loss<T: Real>(
    params: &NetworkParams<T>,
    dataset: &[(FeatureVector<T>, DemandVector<T>)],
) -> Result<T> {
    let preds = dataset
        .iter()
        .map(|(x, _)| predict_demand(params, x))
        .collect::<Result<Vec<_>>>()?;
    let actuals: Vec<DemandVector<T>> = dataset.iter().map(|(_, y)| *y).collect();
    mse(&preds, &actuals)
}

/// Mini-batch gradient descent. Returns the trained parameters and the
/// full-dataset loss (see [`dataset_loss`]) after every epoch.
///
/// With `cfg.normalize`, inputs and targets are standardized with
/// training-set statistics that are stored in the returned parameters.
pub fn train<T: Real>(
    params: &NetworkParams<T>,
    dataset: &[(FeatureVector<T>, DemandVector<T>)],
    cfg: &TrainConfig,
) -> Result<(NetworkParams<T>, Vec<T>)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    cfg.validate()?;
    params.validate()?;
    let normalization = if cfg.normalize {
        Some(Normalization::fit(dataset)?)
    } else {
        None
    };
    let mut params = params.clone().with_normalization(normalization.clone());
    let samples: Vec<(Vec<T>, Vec<T>)> = dataset
        .iter()
        .map(|(x, y)| {
            params.check_input(&x.values)?;
            let y = y.to_array();
            Ok(match &normalization {
                Some(n) => (n.scale_input(&x.values), n.scale_target(&y)),
                None => (x.values.clone(), y.to_vec()),
            })
        })
        .collect::<Result<_>>()?;
    if params.output_dim() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: params.output_dim(),
        });
    }

    let lr = T::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let g = backprop_grads_raw(&params, &batch)?;
            for (w, gw) in params.weights.iter_mut().zip(&g.weights) {
                for (p, d) in w.iter_mut().zip(gw) {
                    *p = *p - lr * *d;
                }
            }
            for (b, gb) in params.biases.iter_mut().zip(&g.biases) {
                for (p, d) in b.iter_mut().zip(gb) {
                    *p = *p - lr * *d;
                }
            }
        }
        history.push(dataset_loss(&params, dataset)?);
    }
    Ok((params, history))
}

pub mod gradcheck {
    //! Central finite-difference audit of [`backprop_grads_raw`].

    use super::*;

    #[derive(Debug, Clone, Serialize)]
    pub struct GradcheckCase {
        pub layer_sizes: Vec<usize>,
        pub batch_size: usize,
        pub max_rel_error: f64,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct GradcheckReport {
        pub step: f64,
        pub cases: Vec<GradcheckCase>,
        pub max_rel_error: f64,
    }

    /// Pre-activations closer than this to a ReLU kink trigger a resample.
    pub const KINK_MARGIN: f64 = 1e-4;
    /// Denominator floor in the relative error.
    pub const REL_FLOOR: f64 = 1e-6;

    pub fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
    }

    fn near_kink(params: &NetworkParams<f64>, batch: &[(Vec<f64>, Vec<f64>)]) -> bool {
        let hidden = params.num_layers() - 1;
        batch.iter().any(|(x, _)| {
            params.pre_activations(x).unwrap()[..hidden]
                .iter()
                .flatten()
                .any(|z| z.abs() < KINK_MARGIN)
        })
    }

    /// Raw (input, target) rows.
    pub type Batch = Vec<(Vec<f64>, Vec<f64>)>;

    /// Random network and batch with no hidden pre-activation near zero.
    pub fn sample_case(
        layer_sizes: &[usize],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(NetworkParams<f64>, Batch)> {
        loop {
            let mut params = init_params::<f64>(layer_sizes, rng.random())?;
            for b in params.biases.iter_mut().flatten() {
                *b = rng.random_range(-0.5..0.5);
            }
            let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..batch_size)
                .map(|_| {
                    let x = (0..layer_sizes[0])
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect();
                    let y = (0..*layer_sizes.last().unwrap())
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect();
                    (x, y)
                })
                .collect();
            if !near_kink(&params, &batch) {
                return Ok((params, batch));
            }
        }
    }

    /// Max relative error between analytic and central-difference gradients.
    pub fn check(
        params: &NetworkParams<f64>,
        batch: &[(Vec<f64>, Vec<f64>)],
        step: f64,
    ) -> Result<f64> {
        let analytic = backprop_grads_raw(params, batch)?;
        let mut probe = params.clone();
        let mut worst = 0.0f64;
        for l in 0..params.num_layers() {
            for i in 0..params.weights[l].len() {
                let orig = params.weights[l][i];
                probe.weights[l][i] = orig + step;
                let up = batch_loss(&probe, batch)?;
                probe.weights[l][i] = orig - step;
                let down = batch_loss(&probe, batch)?;
                probe.weights[l][i] = orig;
                let numeric = (up - down) / (2.0 * step);
                worst = worst.max(relative_error(analytic.weights[l][i], numeric));
            }
            for i in 0..params.biases[l].len() {
                let orig = params.biases[l][i];
                probe.biases[l][i] = orig + step;
                let up = batch_loss(&probe, batch)?;
                probe.biases[l][i] = orig - step;
                let down = batch_loss(&probe, batch)?;
                probe.biases[l][i] = orig;
                let numeric = (up - down) / (2.0 * step);
                worst = worst.max(relative_error(analytic.biases[l][i], numeric));
            }
        }
        Ok(worst)
    }

    /// Runs `cases` random checks cycling through a few layer shapes, each
    /// with at least one hidden layer and two with two or more.
    pub fn audit(seed: u64, cases: usize, step: f64) -> Result<GradcheckReport> {
        const SHAPES: [&[usize]; 4] =
            [&[8, 32, 16, 3], &[4, 6, 5, 2], &[3, 5, 1], &[5, 4, 4, 4, 3]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(cases);
        for c in 0..cases {
            let shape = SHAPES[c % SHAPES.len()];
            let batch_size = 1 + c % 5;
            let (params, batch) = sample_case(shape, batch_size, &mut rng)?;
            out.push(GradcheckCase {
                layer_sizes: shape.to_vec(),
                batch_size,
                max_rel_error: check(&params, &batch, step)?,
            });
        }
        let max_rel_error = out.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
        Ok(GradcheckReport {
            step,
            cases: out,
            max_rel_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<f64>) -> FeatureVector<f64> {
        FeatureVector { t: 0, values }
    }

    fn identity(n: usize) -> NetworkParams<f64> {
        let mut p = init_params::<f64>(&[n, n], 0).unwrap();
        p.weights[0] = (0..n * n)
            .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
            .collect();
        p
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params::<f64>(&[8, 16, 3], 42).unwrap();
        let b = init_params::<f64>(&[8, 16, 3], 42).unwrap();
        assert_eq!(a, b);
        assert!(a.biases.iter().flatten().all(|&v| v == 0.0));
        let bounds = [(6.0f64 / 24.0).sqrt(), (6.0f64 / 19.0).sqrt()];
        for (w, bound) in a.weights.iter().zip(bounds) {
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert_ne!(a, init_params::<f64>(&[8, 16, 3], 43).unwrap());
        assert!(init_params::<f64>(&[8], 0).is_err());
        assert!(init_params::<f64>(&[8, 0, 3], 0).is_err());
    }

    #[test]
    fn forward_identity_zero_and_hand_evaluated() {
        let id = identity(3);
        let out = forward(&id, &fv(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.to_array(), [1.0, 2.0, 3.0]);

        let mut zero = init_params::<f64>(&[4, 5, 3], 1).unwrap();
        zero.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        let out = forward(&zero, &fv(vec![3.0, -1.0, 2.0, 9.0])).unwrap();
        assert_eq!(out.to_array(), [0.0; 3]);

        // x=1 -> hidden [relu(2*1-1), relu(-1*1+0.5)] = [1, 0]
        // -> out [3*1 + 4*0 + 0.5, -1*1 + 2*0 + 2, 1*1 + 1*0 + 0] = [3.5, 1, 1]
        let mut net = init_params::<f64>(&[1, 2, 3], 0).unwrap();
        net.weights[0] = vec![2.0, -1.0];
        net.biases[0] = vec![-1.0, 0.5];
        net.weights[1] = vec![3.0, 4.0, -1.0, 2.0, 1.0, 1.0];
        net.biases[1] = vec![0.5, 2.0, 0.0];
        assert_eq!(net.output(&[1.0]).unwrap(), vec![3.5, 1.0, 1.0]);
        // clamp: negative outputs become zero
        net.biases[1] = vec![-10.0, 2.0, 0.0];
        assert_eq!(forward(&net, &fv(vec![1.0])).unwrap().cpu_demand, 0.0);

        assert!(matches!(
            forward(&id, &fv(vec![1.0, 2.0])),
            Err(Error::Dimension {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn mse_cases() {
        let d = |a: f64, b: f64, c: f64| DemandVector {
            cpu_demand: a,
            gpu_demand: b,
            bandwidth_demand: c,
        };
        let xs = vec![d(1.0, 2.0, 3.0), d(0.5, 0.0, 7.0)];
        assert_eq!(mse(&xs, &xs).unwrap(), 0.0);
        assert_eq!(mse(&[d(2.0, 0.0, 0.0)], &[d(1.0, 0.0, 0.0)]).unwrap(), 1.0);
        // squared norms 1 and 3
        let p = [d(1.0, 0.0, 0.0), d(1.0, 1.0, 1.0)];
        let a = [d(0.0, 0.0, 0.0), d(0.0, 0.0, 0.0)];
        assert_eq!(mse(&p, &a).unwrap(), 2.0);
        assert!(mse::<f64>(&[], &[]).is_err());
        assert!(mse(&p, &a[..1]).is_err());
    }

    #[test]
    fn zero_error_batch_has_zero_gradient() {
        let net = init_params::<f64>(&[3, 4, 3], 5).unwrap();
        let batch: Vec<(Vec<f64>, Vec<f64>)> = [[0.1, 0.2, 0.3], [1.0, -0.5, 0.25]]
            .iter()
            .map(|x| (x.to_vec(), net.output(x).unwrap()))
            .collect();
        let g = backprop_grads_raw(&net, &batch).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let net = init_params::<f64>(&[3, 4, 3], 5).unwrap();
        let s = (vec![0.3, -0.2, 0.9], vec![1.0, 0.0, 2.0]);
        let once = backprop_grads_raw(&net, std::slice::from_ref(&s)).unwrap();
        let twice = backprop_grads_raw(&net, &[s.clone(), s]).unwrap();
        for (a, b) in once.flatten().iter().zip(twice.flatten()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let report = gradcheck::audit(7, 12, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    fn linear_dataset(n: usize) -> Vec<(FeatureVector<f64>, DemandVector<f64>)> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..n)
            .map(|t| {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                let y = DemandVector {
                    cpu_demand: 2.0 * x[0] + x[1] + 0.5,
                    gpu_demand: x[2] + 3.0 * x[3] + 0.1,
                    bandwidth_demand: x[0] + x[1] + x[2] + x[3],
                };
                (FeatureVector { t, values: x }, y)
            })
            .collect()
    }

    #[test]
    fn linear_net_learns_linear_target() {
        let ds = linear_dataset(128);
        let init = init_params::<f64>(&[4, 3], 3).unwrap();
        let cfg = TrainConfig::default();
        let initial = dataset_loss(
            &init
                .clone()
                .with_normalization(Some(Normalization::fit(&ds).unwrap())),
            &ds,
        )
        .unwrap();
        let (trained, history) = train(&init, &ds, &cfg).unwrap();
        assert_eq!(history.len(), 200);
        assert!(*history.last().unwrap() <= 0.01 * initial);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] * 1.05);
        }
        let last = dataset_loss(&trained, &ds).unwrap();
        assert!((last - history[199]).abs() <= 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let ds = linear_dataset(40);
        let init = init_params::<f64>(&[4, 5, 3], 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..Default::default()
        };
        let (trained, history) = train(&init, &ds, &cfg).unwrap();
        assert_eq!(trained.weights, init.weights);
        assert_eq!(trained.biases, init.biases);
        assert!(history.iter().all(|&l| l == history[0]));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = linear_dataset(50);
        let init = init_params::<f64>(&[4, 6, 3], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        let (a, ha) = train(&init, &ds, &cfg).unwrap();
        let (b, hb) = train(&init, &ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(train(&init, &[], &cfg).is_err());
    }

    #[test]
    fn predict_identity_and_nonnegative() {
        let mut id = init_params::<f64>(&[8, 8], 0).unwrap();
        id.weights[0] = (0..64)
            .map(|i| if i / 8 == i % 8 { 1.0 } else { 0.0 })
            .collect();
        let d = predict_demand(&id, &fv(vec![5.0, -2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(d.to_array(), [5.0, 0.0, 0.0]);

        let ds = linear_dataset(30);
        let init = init_params::<f64>(&[4, 6, 3], 1).unwrap();
        let (net, _) = train(
            &init,
            &ds,
            &TrainConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for x in [vec![-100.0; 4], vec![100.0, -50.0, 3.0, 0.0], vec![0.0; 4]] {
            assert!(predict_demand(&net, &fv(x)).unwrap().is_valid());
        }
        assert!(predict_demand(&net, &fv(vec![0.0; 3])).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let ds = linear_dataset(30);
        let init = init_params::<f64>(&[4, 6, 3], 1).unwrap();
        let (net, _) = train(
            &init,
            &ds,
            &TrainConfig {
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        net.save_json(&path).unwrap();
        let back = NetworkParams::<f64>::load_json(&path).unwrap();
        assert_eq!(back, net);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("\"input_mean\""));
    }

    #[test]
    fn single_precision_forward() {
        let mut net = init_params::<f32>(&[2, 3], 0).unwrap();
        net.weights[0] = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let d = forward(
            &net,
            &FeatureVector {
                t: 0,
                values: vec![0.5f32, 0.25],
            },
        )
        .unwrap();
        assert_eq!(d.to_array(), [0.5, 0.25, 0.75]);
    }
}
