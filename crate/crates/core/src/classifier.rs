//! L2-regularized logistic regression over sparse feature rows.
//!
//! Dense columns are standardized with training statistics. The scaling is
//! folded into effective weights at evaluation time so rows stay sparse.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{Label, Predictions};
use crate::error::{EggsError, Result};
use crate::features::{ColumnDictionary, ColumnKind, FeatureMatrix};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Full-batch gradient descent with Armijo backtracking.
    GradientDescent,
    /// Shuffled minibatch SGD with a 1/(1+epoch) step decay.
    Sgd {
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-2,
            max_iter: 1000,
            tol: 1e-6,
            seed: 0,
            optimizer: Optimizer::GradientDescent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// Mean/std of dense columns over the rows of `x`; binary columns pass through.
    pub fn fit(x: &FeatureMatrix) -> Scaler {
        let d = x.n_cols();
        let n = x.n_rows().max(1) as f64;
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        for row in x.rows() {
            for &(c, v) in row {
                sum[c as usize] += v;
                sumsq[c as usize] += v * v;
            }
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            if x.columns.kind(j) == ColumnKind::Dense {
                let m = sum[j] / n;
                let var = (sumsq[j] / n - m * m).max(0.0);
                mean[j] = m;
                if var > 1e-24 {
                    scale[j] = var.sqrt();
                }
            }
        }
        Scaler { mean, scale }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub format_version: u32,
    pub columns: ColumnDictionary,
    pub fingerprint: String,
    /// Weights on standardized columns.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
    pub l2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Objective and gradient over a fixed design; `params = [w..., b]`.
struct Problem<'a> {
    x: &'a FeatureMatrix,
    y: Vec<f64>,
    scaler: &'a Scaler,
    l2: f64,
}

impl Problem<'_> {
    fn effective(&self, params: &[f64]) -> (Vec<f64>, f64) {
        let d = self.x.n_cols();
        let mut u = vec![0.0; d];
        let mut c = params[d];
        for j in 0..d {
            u[j] = params[j] / self.scaler.scale[j];
            c -= u[j] * self.scaler.mean[j];
        }
        (u, c)
    }

    fn margins(&self, params: &[f64], rows: impl Iterator<Item = usize>) -> Vec<(usize, f64)> {
        let (u, c) = self.effective(params);
        rows.map(|i| (i, c + self.x.row(i).iter().map(|&(j, v)| u[j as usize] * v).sum::<f64>()))
            .collect()
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let n = self.x.n_rows() as f64;
        let d = self.x.n_cols();
        let data: f64 = self
            .margins(params, 0..self.x.n_rows())
            .into_iter()
            .map(|(i, z)| if self.y[i] > 0.5 { softplus(-z) } else { softplus(z) })
            .sum();
        data / n + 0.5 * self.l2 * params[..d].iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient restricted to `rows` (scaled by 1/|rows|) plus the full L2 term.
    fn gradient(&self, params: &[f64], rows: &[usize]) -> Vec<f64> {
        let d = self.x.n_cols();
        let m = rows.len().max(1) as f64;
        let mut raw = vec![0.0; d];
        let mut rsum = 0.0;
        for (i, z) in self.margins(params, rows.iter().copied()) {
            let r = sigmoid(z) - self.y[i];
            rsum += r;
            for &(j, v) in self.x.row(i) {
                raw[j as usize] += r * v;
            }
        }
        let mut g = vec![0.0; d + 1];
        for j in 0..d {
            g[j] = (raw[j] - self.scaler.mean[j] * rsum) / (m * self.scaler.scale[j]) + self.l2 * params[j];
        }
        g[d] = rsum / m;
        g
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits the model on every row of `x`; `y[i]` labels row `i`.
pub fn train(x: &FeatureMatrix, y: &[Label], config: &TrainConfig) -> Result<LinearModel> {
    if x.n_rows() == 0 {
        return Err(EggsError::InvalidInput("cannot train on an empty matrix".into()));
    }
    if y.len() != x.n_rows() {
        return Err(EggsError::InvalidInput(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(EggsError::Config(format!("l2 must be >= 0, got {}", config.l2)));
    }
    let d = x.n_cols();
    let scaler = Scaler::fit(x);
    let problem = Problem {
        x,
        y: y.iter().map(|l| l.is_spam() as u8 as f64).collect(),
        scaler: &scaler,
        l2: config.l2,
    };
    let n_spam = problem.y.iter().filter(|&&v| v > 0.5).count();
    let mut model = LinearModel {
        format_version: MODEL_FORMAT_VERSION,
        columns: x.columns.clone(),
        fingerprint: x.columns.fingerprint(),
        weights: vec![0.0; d],
        bias: 0.0,
        scaler: scaler.clone(),
        l2: config.l2,
        iterations: 0,
        converged: true,
        final_loss: 0.0,
    };
    if n_spam == 0 || n_spam == x.n_rows() {
        log::warn!("training labels contain a single class; fitting a constant model");
        let prevalence = (n_spam as f64 / x.n_rows() as f64).clamp(1e-6, 1.0 - 1e-6);
        model.bias = logit(prevalence);
        let mut params = vec![0.0; d + 1];
        params[d] = model.bias;
        model.final_loss = problem.loss(&params);
        return Ok(model);
    }

    let mut params = vec![0.0; d + 1];
    let (iterations, converged) = match config.optimizer {
        Optimizer::GradientDescent => gradient_descent(&problem, &mut params, config),
        Optimizer::Sgd {
            epochs,
            learning_rate,
            batch_size,
        } => sgd(&problem, &mut params, config, epochs, learning_rate, batch_size.max(1)),
    };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(EggsError::InvalidInput("training diverged to non-finite weights".into()));
    }
    model.bias = params[d];
    params.truncate(d);
    model.final_loss = problem.loss(&[params.as_slice(), &[model.bias]].concat());
    model.weights = params;
    model.iterations = iterations;
    model.converged = converged;
    Ok(model)
}

fn gradient_descent(problem: &Problem<'_>, params: &mut Vec<f64>, config: &TrainConfig) -> (usize, bool) {
    let all: Vec<usize> = (0..problem.x.n_rows()).collect();
    let mut loss = problem.loss(params);
    let mut step = 1.0;
    for it in 0..config.max_iter {
        let g = problem.gradient(params, &all);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() <= config.tol {
            return (it, true);
        }
        step *= 2.0;
        loop {
            let trial: Vec<f64> = params.iter().zip(&g).map(|(p, gi)| p - step * gi).collect();
            let trial_loss = problem.loss(&trial);
            if trial_loss <= loss - 0.5 * step * gnorm2 {
                *params = trial;
                loss = trial_loss;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // no representable decrease left
                return (it, norm(&g) <= config.tol);
            }
        }
    }
    let g = problem.gradient(params, &all);
    (config.max_iter, norm(&g) <= config.tol)
}

fn sgd(
    problem: &Problem<'_>,
    params: &mut [f64],
    config: &TrainConfig,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
) -> (usize, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..problem.x.n_rows()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let lr = learning_rate / (1.0 + epoch as f64);
        for batch in order.chunks(batch_size) {
            let g = problem.gradient(params, batch);
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= lr * gi;
            }
        }
    }
    let all: Vec<usize> = (0..problem.x.n_rows()).collect();
    (epochs, norm(&problem.gradient(params, &all)) <= config.tol)
}

impl LinearModel {
    pub fn weight(&self, column: &str) -> Option<f64> {
        self.columns.get(column).map(|j| self.weights[j])
    }

    /// Linear score `b + w . standardized(x)` for every row.
    pub fn decision_function(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.columns.fingerprint() != self.fingerprint {
            return Err(EggsError::ColumnMismatch(format!(
                "matrix has {} columns (fingerprint {}), model expects {} (fingerprint {})",
                x.n_cols(),
                x.columns.fingerprint(),
                self.columns.len(),
                self.fingerprint
            )));
        }
        let u: Vec<f64> = self.weights.iter().zip(&self.scaler.scale).map(|(w, s)| w / s).collect();
        let c = self.bias - u.iter().zip(&self.scaler.mean).map(|(u, m)| u * m).sum::<f64>();
        Ok(x.rows()
            .map(|row| c + row.iter().map(|&(j, v)| u[j as usize] * v).sum::<f64>())
            .collect())
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self
            .decision_function(x)?
            .into_iter()
            .map(|z| sigmoid(z).clamp(1e-15, 1.0 - 1e-15))
            .collect())
    }

    /// `predict_proba` keyed by row id.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        Ok(x.row_ids.iter().cloned().zip(self.predict_proba(x)?).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| EggsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<LinearModel> {
        let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
        let model: LinearModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(EggsError::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>], kind: ColumnKind) -> FeatureMatrix {
        let mut cols = ColumnDictionary::new();
        for j in 0..rows[0].len() {
            cols.push(format!("f{j}"), kind);
        }
        let mut m = FeatureMatrix::new(cols);
        for (i, r) in rows.iter().enumerate() {
            m.push_row(
                format!("r{i}"),
                r.iter().enumerate().map(|(j, &v)| (j as u32, v)).collect(),
            )
            .unwrap();
        }
        m
    }

    #[test]
    fn zero_model_predicts_half() {
        let x = matrix(&[vec![1.0, 2.0], vec![-3.0, 0.5]], ColumnKind::Binary);
        let model = LinearModel {
            format_version: MODEL_FORMAT_VERSION,
            columns: x.columns.clone(),
            fingerprint: x.columns.fingerprint(),
            weights: vec![0.0, 0.0],
            bias: 0.0,
            scaler: Scaler {
                mean: vec![0.0; 2],
                scale: vec![1.0; 2],
            },
            l2: 0.0,
            iterations: 0,
            converged: true,
            final_loss: 0.0,
        };
        assert_eq!(model.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn sigmoid_asymptote_and_logit() {
        assert!(sigmoid(20.0) >= 1.0 - 1e-8);
        assert!((sigmoid(0.8472978) - 0.7).abs() < 1e-6);
        assert!((logit(0.7) - 0.8472978603872037).abs() < 1e-12);
    }

    #[test]
    fn single_feature_probability() {
        let x = matrix(&[vec![0.8472978]], ColumnKind::Binary);
        let model = LinearModel {
            format_version: MODEL_FORMAT_VERSION,
            columns: x.columns.clone(),
            fingerprint: x.columns.fingerprint(),
            weights: vec![1.0],
            bias: 0.0,
            scaler: Scaler {
                mean: vec![0.0],
                scale: vec![1.0],
            },
            l2: 0.0,
            iterations: 0,
            converged: true,
            final_loss: 0.0,
        };
        assert!((model.predict_proba(&x).unwrap()[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn single_class_gives_constant_model() {
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0]], ColumnKind::Dense);
        let y = vec![Label::Ham; 3];
        let model = train(&x, &y, &TrainConfig { l2: 100.0, ..TrainConfig::default() }).unwrap();
        let p = model.predict_proba(&x).unwrap();
        assert!(p.iter().all(|&v| v == p[0] && v <= 1e-6 + 1e-12));
        assert!(model.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn loss_decreases_monotonically() {
        let x = matrix(&[vec![-1.0], vec![1.0]], ColumnKind::Binary);
        let y = vec![Label::Ham, Label::Spam];
        let scaler = Scaler::fit(&x);
        let problem = Problem {
            x: &x,
            y: vec![0.0, 1.0],
            scaler: &scaler,
            l2: 1.0,
        };
        let mut prev = f64::INFINITY;
        for iters in 0..15 {
            let cfg = TrainConfig {
                l2: 1.0,
                max_iter: iters,
                tol: 0.0,
                ..TrainConfig::default()
            };
            let model = train(&x, &y, &cfg).unwrap();
            let loss = problem.loss(&[model.weights[0], model.bias]);
            assert!(loss <= prev + 1e-15, "iteration {iters}: {loss} > {prev}");
            prev = loss;
        }
    }

    #[test]
    fn column_mismatch_is_an_error() {
        let x = matrix(&[vec![1.0], vec![0.0]], ColumnKind::Dense);
        let model = train(&x, &[Label::Spam, Label::Ham], &TrainConfig::default()).unwrap();
        let other = matrix(&[vec![1.0, 2.0]], ColumnKind::Dense);
        assert!(matches!(model.predict_proba(&other), Err(EggsError::ColumnMismatch(_))));
    }

    #[test]
    fn sgd_is_seed_reproducible() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<Label> = (0..40)
            .map(|i| if i % 7 > 3 { Label::Spam } else { Label::Ham })
            .collect();
        let x = matrix(&rows, ColumnKind::Dense);
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd {
                epochs: 20,
                learning_rate: 0.5,
                batch_size: 4,
            },
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train(&x, &y, &cfg).unwrap();
        let b = train(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.weight("f0").unwrap() > 0.0);
    }

    #[test]
    fn save_and_load() {
        let x = matrix(&[vec![1.0], vec![0.0]], ColumnKind::Dense);
        let model = train(&x, &[Label::Spam, Label::Ham], &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        assert_eq!(LinearModel::load(&p).unwrap(), model);
    }
}
