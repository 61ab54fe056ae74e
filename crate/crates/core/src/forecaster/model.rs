use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{gated_tc_forward, gcn_forward, normalize_adjacency, receptive_field, Branch};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{CgadError, Result};
use crate::series::NormalizationSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window_w: usize,
    pub blocks: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub gcn_hidden: usize,
    pub output_hidden: usize,
    pub kernel_sizes: Vec<usize>,
    pub dilation: usize,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_w: 15,
            blocks: 3,
            residual_channels: 16,
            skip_channels: 32,
            gcn_hidden: 32,
            output_hidden: 64,
            kernel_sizes: vec![2, 3, 5, 6],
            dilation: 1,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CgadError::Config(m));
        let kmax = self.max_kernel();
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad("kernel_sizes must be a non-empty list of positive sizes".into());
        }
        if self.window_w < kmax {
            return bad(format!("window_w {} is smaller than the largest kernel {kmax}", self.window_w));
        }
        if self.blocks == 0 {
            return bad("blocks must be at least 1".into());
        }
        if [self.residual_channels, self.skip_channels, self.gcn_hidden, self.output_hidden].contains(&0) {
            return bad("channel counts must be at least 1".into());
        }
        if !self.residual_channels.is_multiple_of(self.kernel_sizes.len()) {
            return bad(format!(
                "residual_channels {} is not divisible by the {} inception branches",
                self.residual_channels,
                self.kernel_sizes.len()
            ));
        }
        if self.dilation != 1 {
            return bad("only dilation 1 is supported".into());
        }
        Ok(())
    }

    fn max_kernel(&self) -> usize {
        self.kernel_sizes.iter().copied().max().unwrap_or(0)
    }

    /// Zero steps prepended to every window so the stack ends at length
    /// `max(1, w - r + 1)`.
    pub fn padding(&self) -> usize {
        receptive_field(self.blocks, self.max_kernel()).saturating_sub(self.window_w)
    }

    /// Time length entering block `b` (and, for `b = blocks`, leaving the last).
    fn length_at(&self, b: usize) -> usize {
        self.window_w + self.padding() - b * (self.max_kernel() - 1)
    }
}

/// Trainable tensor with a stable name.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Single-step forecaster: lifted input, gated inception + graph blocks with
/// residual and skip paths, two-layer output head.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub node_names: Vec<String>,
    /// Row-major `N x N` normalized adjacency with self-loops.
    pub normalized_adjacency: Vec<f64>,
    pub parameters: Vec<Parameter>,
    /// Scaling applied to raw data before windowing, kept with the weights.
    pub normalization: Option<NormalizationSpec>,
}

/// Parameter shapes in registration order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let rc = cfg.residual_channels;
    let per_branch = rc / cfg.kernel_sizes.len();
    let mut out = vec![
        ("lift.weight".to_string(), vec![rc, 1, 1]),
        ("lift.bias".to_string(), vec![rc]),
    ];
    for b in 0..cfg.blocks {
        for stack in ["filter", "gate"] {
            for &k in &cfg.kernel_sizes {
                out.push((format!("block{b}.{stack}.k{k}.weight"), vec![per_branch, rc, k]));
                out.push((format!("block{b}.{stack}.k{k}.bias"), vec![per_branch]));
            }
        }
        let len = cfg.length_at(b + 1);
        out.push((format!("block{b}.skip.weight"), vec![cfg.skip_channels, rc, len]));
        out.push((format!("block{b}.skip.bias"), vec![cfg.skip_channels]));
        out.push((format!("block{b}.gcn.w0"), vec![cfg.gcn_hidden, rc, 1]));
        out.push((format!("block{b}.gcn.w1"), vec![rc, cfg.gcn_hidden, 1]));
    }
    let last = cfg.length_at(cfg.blocks);
    out.extend([
        ("skip_end.weight".to_string(), vec![cfg.skip_channels, rc, last]),
        ("skip_end.bias".to_string(), vec![cfg.skip_channels]),
        ("head.hidden.weight".to_string(), vec![cfg.output_hidden, cfg.skip_channels, 1]),
        ("head.hidden.bias".to_string(), vec![cfg.output_hidden]),
        ("head.out.weight".to_string(), vec![1, cfg.output_hidden, 1]),
        ("head.out.bias".to_string(), vec![1]),
    ]);
    out
}

/// Leaves of one forward pass, in the order of [`layout`].
struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    fn next(&self, at: &mut usize) -> Var {
        *at += 1;
        self.vars[*at - 1]
    }
}

impl ForecastModel {
    /// Fresh model with weights uniform in `±1/sqrt(fan_in)`.
    pub fn new(config: ModelConfig, adjacency: &[Vec<f64>], node_names: Vec<String>) -> Result<Self> {
        config.validate()?;
        if node_names.len() != adjacency.len() {
            return Err(CgadError::Dimension(format!(
                "{} node names for a {}-node adjacency",
                node_names.len(),
                adjacency.len()
            )));
        }
        let normalized: Vec<f64> = normalize_adjacency(adjacency)?.into_iter().flatten().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let shapes = layout(&config);
        let mut parameters = Vec::with_capacity(shapes.len());
        let mut fan_in = 1;
        for (name, shape) in shapes {
            // biases follow their weight and share its fan-in
            if shape.len() == 3 {
                fan_in = shape[1] * shape[2];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let numel: usize = shape.iter().product();
            let data = (0..numel).map(|_| rng.random_range(-bound..=bound)).collect();
            parameters.push(Parameter { name, tensor: Tensor::new(shape, data)?.with_grad() });
        }
        Ok(Self {
            config,
            node_names,
            normalized_adjacency: normalized,
            parameters,
            normalization: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor> {
        self.parameters.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.parameters.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Checks the parameter list against the architecture implied by the config.
    pub(crate) fn check_layout(&self) -> Result<()> {
        let expected = layout(&self.config);
        let n = self.n_nodes();
        if self.normalized_adjacency.len() != n * n {
            return Err(CgadError::Dimension(format!(
                "adjacency has {} entries for {n} nodes",
                self.normalized_adjacency.len()
            )));
        }
        if expected.len() != self.parameters.len()
            || expected
                .iter()
                .zip(&self.parameters)
                .any(|((name, shape), p)| *name != p.name || shape.as_slice() != p.tensor.shape())
        {
            return Err(CgadError::Dimension("parameters do not match the model configuration".into()));
        }
        Ok(())
    }

    /// Records the forward pass on `tape`; returns the parameter leaves and
    /// the `[B, 1, N, 1]` prediction.
    pub(crate) fn record(&self, tape: &mut Tape, inputs: &[f64], batch: usize) -> Result<(Vec<Var>, Var)> {
        let cfg = &self.config;
        let (n, w) = (self.n_nodes(), cfg.window_w);
        if inputs.len() != batch * n * w {
            return Err(CgadError::Dimension(format!(
                "expected {batch} x {n} x {w} inputs, got {} values",
                inputs.len()
            )));
        }
        let vars = self
            .parameters
            .iter()
            .map(|p| tape.leaf(p.tensor.shape().to_vec(), p.tensor.data().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let bound = Bound { vars };
        let at = &mut 0;

        let pad = cfg.padding();
        let len = w + pad;
        let mut padded = vec![0.0; batch * n * len];
        for (dst, src) in padded.chunks_mut(len).zip(inputs.chunks(w)) {
            dst[pad..].copy_from_slice(src);
        }
        let x = tape.leaf(vec![batch, 1, n, len], padded)?;
        let adjacency = Rc::new(self.normalized_adjacency.clone());

        let (lw, lb) = (bound.next(at), bound.next(at));
        let mut x = tape.conv(x, lw, Some(lb), len)?;
        let mut skip: Option<Var> = None;
        for _ in 0..cfg.blocks {
            let mut stacks = [Vec::new(), Vec::new()];
            for stack in &mut stacks {
                for _ in &cfg.kernel_sizes {
                    let (weight, bias) = (bound.next(at), bound.next(at));
                    stack.push(Branch { weight, bias });
                }
            }
            let h = gated_tc_forward(tape, x, &stacks[0], &stacks[1])?;
            let (sw, sb) = (bound.next(at), bound.next(at));
            let s = tape.conv(h, sw, Some(sb), 1)?;
            skip = Some(match skip {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });
            let (w0, w1) = (bound.next(at), bound.next(at));
            let g = gcn_forward(tape, h, &adjacency, w0, w1)?;
            let keep = tape.shape(g)[3];
            let residual = tape.take_last(x, keep)?;
            x = tape.add(g, residual)?;
        }
        let (ew, eb) = (bound.next(at), bound.next(at));
        let s = tape.conv(x, ew, Some(eb), 1)?;
        let total = match skip {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        };
        let hidden = tape.relu(total);
        let (hw, hb) = (bound.next(at), bound.next(at));
        let hidden = tape.conv(hidden, hw, Some(hb), 1)?;
        let hidden = tape.relu(hidden);
        let (ow, ob) = (bound.next(at), bound.next(at));
        let out = tape.conv(hidden, ow, Some(ob), 1)?;
        debug_assert_eq!(*at, bound.vars.len());
        Ok((bound.vars, out))
    }

    /// Predicts the next value of every node for each of `batch` windows.
    ///
    /// `inputs` is `B x N x w` row-major; the result is `B x N`.
    pub fn forward(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (_, out) = self.record(&mut tape, inputs, batch)?;
        Ok(tape.value(out).to_vec())
    }

    /// Loss of one batch and its gradient for every parameter, in
    /// registration order. Unused parameters get zero gradients.
    pub fn loss_and_gradients(&self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let (vars, out) = self.record(&mut tape, inputs, batch)?;
        let loss = tape.mse(out, Rc::new(targets.to_vec()))?;
        let grads = tape.backward(loss)?;
        let per_param = vars
            .iter()
            .zip(&self.parameters)
            .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.tensor.numel()], <[f64]>::to_vec))
            .collect();
        Ok((tape.value(loss)[0], per_param))
    }

    /// Runs a backward pass and stores the result in each parameter's
    /// gradient accumulator.
    pub fn backward(&mut self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(inputs, targets, batch)?;
        for (p, g) in self.parameters.iter_mut().zip(grads) {
            p.tensor.accumulate_grad(&g);
        }
        Ok(loss)
    }

    pub fn zero_grad(&mut self) {
        self.parameters.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    pub fn is_finite(&self) -> bool {
        self.parameters.iter().all(|p| p.tensor.is_finite())
    }
}

/// `(1/B) sum_b ||pred_b - target_b||^2` over `B x N` matrices.
pub fn mse_loss(pred: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    if pred.len() != target.len() || batch == 0 || !pred.len().is_multiple_of(batch) {
        return Err(CgadError::Dimension(format!(
            "prediction has {} values, target {} (batch {batch})",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / batch as f64)
}
