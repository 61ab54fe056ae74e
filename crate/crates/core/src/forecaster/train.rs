use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ForecastModel;
use crate::error::{CgadError, Result};
use crate::series::WindowBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Seed of the per-epoch shuffle.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CgadError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Per-epoch mean training loss and validation MSE.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_mse\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_mse).enumerate() {
            out.push_str(&format!("{},{t:.16e},{v:.16e}\n", e + 1));
        }
        out
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &ForecastModel) -> Self {
        let zeros = || model.parameters.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, model: &mut ForecastModel, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in model.parameters.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (k, theta) in p.tensor.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Minibatch Adam on shuffled windows; keeps the parameters of the epoch
/// with the lowest validation MSE.
pub fn train(
    mut model: ForecastModel,
    train_windows: &WindowBatch,
    val_windows: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<(ForecastModel, LossHistory)> {
    cfg.validate()?;
    for (what, set) in [("training", train_windows), ("validation", val_windows)] {
        if set.is_empty() {
            return Err(CgadError::Argument(format!("no {what} windows")));
        }
        if set.n_sensors != model.n_nodes() || set.window != model.config.window_w {
            return Err(CgadError::Dimension(format!(
                "{what} windows are {} sensors x {} steps, model expects {} x {}",
                set.n_sensors,
                set.window,
                model.n_nodes(),
                model.config.window_w
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut adam = Adam::new(&model);
    let mut history = LossHistory::default();
    let mut best: Option<(f64, ForecastModel)> = None;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_windows.select(rows);
            let (loss, grads) = model.loss_and_gradients(&batch.inputs, &batch.targets, rows.len())?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(CgadError::Numeric(format!(
                    "non-finite loss or gradient at epoch {} batch {bi}",
                    epoch + 1
                )));
            }
            adam.update(&mut model, &grads, cfg);
            total += loss * rows.len() as f64;
        }
        history.train_loss.push(total / train_windows.len() as f64);
        let val = evaluate(&model, val_windows, cfg.batch_size)?;
        if !val.is_finite() {
            return Err(CgadError::Numeric(format!("non-finite validation MSE after epoch {}", epoch + 1)));
        }
        history.val_mse.push(val);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            history.best_epoch = epoch;
            best = Some((val, model.clone()));
        }
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok((best, history))
}

/// Mean over windows of the squared forecast error norm.
pub fn evaluate(model: &ForecastModel, windows: &WindowBatch, batch_size: usize) -> Result<f64> {
    if windows.is_empty() {
        return Err(CgadError::Argument("no windows to evaluate".into()));
    }
    let pred = predict(model, windows, batch_size)?;
    let sq: f64 = pred.iter().zip(&windows.targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / windows.len() as f64)
}

/// Forecasts for every window, `len x N` row-major. Chunks are evaluated in
/// parallel; each prediction depends only on its own window.
pub fn predict(model: &ForecastModel, windows: &WindowBatch, batch_size: usize) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let n = windows.n_sensors;
    let w = windows.window;
    if n != model.n_nodes() || w != model.config.window_w {
        return Err(CgadError::Dimension(format!(
            "windows are {n} sensors x {w} steps, model expects {} x {}",
            model.n_nodes(),
            model.config.window_w
        )));
    }
    let chunk = batch_size.max(1);
    let parts = windows
        .inputs
        .par_chunks(chunk * n * w)
        .map(|x| model.forward(x, x.len() / (n * w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}
