//! Minimal reverse-mode differentiation over whole tensors.
//!
//! Every operation appends a node holding its forward value and enough
//! bookkeeping to push an output gradient back to its inputs. Activations
//! are 4-D `[batch, channel, node, time]`, row-major with time innermost.

use std::rc::Rc;

use crate::error::{CgadError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    batch: usize,
    chan: usize,
    node: usize,
    time: usize,
}

impl Dims {
    fn of(shape: &[usize]) -> Option<Self> {
        match *shape {
            [batch, chan, node, time] => Some(Self { batch, chan, node, time }),
            _ => None,
        }
    }

    fn shape(self) -> Vec<usize> {
        vec![self.batch, self.chan, self.node, self.time]
    }
}

enum Op {
    Leaf,
    /// Causal convolution over time, evaluated on the last `out_len` steps.
    Conv { x: Var, w: Var, b: Option<Var>, k: usize },
    TakeLast { x: Var },
    Concat { parts: Vec<Var> },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    NodeMix { x: Var, mix: Rc<Vec<f64>> },
    Mse { pred: Var, target: Rc<Vec<f64>>, batch: usize },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var, what: &str) -> Result<Dims> {
        Dims::of(self.shape(v))
            .ok_or_else(|| CgadError::Dimension(format!("{what} expects a 4-D tensor, got {:?}", self.shape(v))))
    }

    pub fn leaf(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != value.len() {
            return Err(CgadError::Dimension(format!(
                "leaf of shape {shape:?} given {} values",
                value.len()
            )));
        }
        Ok(self.push(shape, value, Op::Leaf))
    }

    /// `out[.., t] = b + sum_s w[co, ci, s] * x[.., start + t - s]` with
    /// `start = L - out_len`, so each output depends only on inputs at or
    /// before its own time step.
    ///
    /// `x: [B, Cin, N, L]`, `w: [Cout, Cin, k]`, `b: [Cout]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, out_len: usize) -> Result<Var> {
        let d = self.dims(x, "conv")?;
        let (c_out, k) = match *self.shape(w) {
            [c_out, c_in, k] if c_in == d.chan => (c_out, k),
            ref s => {
                return Err(CgadError::Dimension(format!(
                    "conv weight {s:?} incompatible with input channels {}",
                    d.chan
                )))
            }
        };
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(CgadError::Dimension(format!("conv bias {:?} for {c_out} outputs", self.shape(b))));
            }
        }
        if k == 0 || out_len == 0 || out_len + k - 1 > d.time {
            return Err(CgadError::Argument(format!(
                "conv with kernel {k} cannot produce {out_len} steps from {}",
                d.time
            )));
        }
        let start = d.time - out_len;
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = b.map(|b| &self.nodes[b.0].value);
        let mut out = vec![0.0; d.batch * c_out * d.node * out_len];
        for bi in 0..d.batch {
            for co in 0..c_out {
                let bias = bv.map_or(0.0, |bv| bv[co]);
                for n in 0..d.node {
                    let o = ((bi * c_out + co) * d.node + n) * out_len;
                    let orow = &mut out[o..o + out_len];
                    orow.iter_mut().for_each(|v| *v = bias);
                    for ci in 0..d.chan {
                        let xo = ((bi * d.chan + ci) * d.node + n) * d.time;
                        let xrow = &xv[xo..xo + d.time];
                        let wrow = &wv[(co * d.chan + ci) * k..(co * d.chan + ci + 1) * k];
                        for (s, &wk) in wrow.iter().enumerate() {
                            let xs = &xrow[start - s..start - s + out_len];
                            orow.iter_mut().zip(xs).for_each(|(o, &xv)| *o += wk * xv);
                        }
                    }
                }
            }
        }
        let shape = vec![d.batch, c_out, d.node, out_len];
        Ok(self.push(shape, out, Op::Conv { x, w, b, k }))
    }

    /// Keeps the last `keep` time steps.
    pub fn take_last(&mut self, x: Var, keep: usize) -> Result<Var> {
        let d = self.dims(x, "take_last")?;
        if keep == 0 || keep > d.time {
            return Err(CgadError::Argument(format!("cannot keep {keep} of {} steps", d.time)));
        }
        let xv = &self.nodes[x.0].value;
        let out: Vec<f64> = xv.chunks(d.time).flat_map(|row| row[d.time - keep..].iter().copied()).collect();
        let shape = Dims { time: keep, ..d }.shape();
        Ok(self.push(shape, out, Op::TakeLast { x }))
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.dims(*parts.first().ok_or_else(|| CgadError::Argument("empty concat".into()))?, "concat")?;
        let mut chans = 0;
        for &p in parts {
            let d = self.dims(p, "concat")?;
            if (d.batch, d.node, d.time) != (first.batch, first.node, first.time) {
                return Err(CgadError::Dimension(format!(
                    "concat of {:?} with {:?}",
                    first.shape(),
                    d.shape()
                )));
            }
            chans += d.chan;
        }
        let plane = first.node * first.time;
        let mut out = Vec::with_capacity(first.batch * chans * plane);
        for bi in 0..first.batch {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.nodes[p.0].value[bi * c * plane..(bi + 1) * c * plane]);
            }
        }
        let shape = Dims { chan: chans, ..first }.shape();
        Ok(self.push(shape, out, Op::Concat { parts: parts.to_vec() }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, op)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(CgadError::Dimension(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `out[b, c, i, t] = sum_j mix[i, j] * x[b, c, j, t]` for a constant
    /// row-major `N x N` matrix.
    pub fn node_mix(&mut self, x: Var, mix: Rc<Vec<f64>>) -> Result<Var> {
        let d = self.dims(x, "node_mix")?;
        if mix.len() != d.node * d.node {
            return Err(CgadError::Dimension(format!(
                "{}-entry mixing matrix for {} nodes",
                mix.len(),
                d.node
            )));
        }
        let xv = &self.nodes[x.0].value;
        let plane = d.node * d.time;
        let mut out = vec![0.0; xv.len()];
        for (oplane, xplane) in out.chunks_mut(plane).zip(xv.chunks(plane)) {
            for i in 0..d.node {
                let orow = &mut oplane[i * d.time..(i + 1) * d.time];
                for j in 0..d.node {
                    let m = mix[i * d.node + j];
                    if m != 0.0 {
                        let xrow = &xplane[j * d.time..(j + 1) * d.time];
                        orow.iter_mut().zip(xrow).for_each(|(o, &v)| *o += m * v);
                    }
                }
            }
        }
        Ok(self.push(d.shape(), out, Op::NodeMix { x, mix }))
    }

    /// `(1/B) * sum ||pred_b - target_b||^2` where `B` is the leading dimension.
    pub fn mse(&mut self, pred: Var, target: Rc<Vec<f64>>) -> Result<Var> {
        let p = &self.nodes[pred.0];
        if p.value.len() != target.len() {
            return Err(CgadError::Dimension(format!(
                "prediction has {} values, target {}",
                p.value.len(),
                target.len()
            )));
        }
        let batch = p.shape.first().copied().unwrap_or(1).max(1);
        let sq: f64 = p.value.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push(vec![1], vec![sq / batch as f64], Op::Mse { pred, target, batch }))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| CgadError::State("backward called before any forward pass was recorded".into()))?;
        if node.value.len() != 1 {
            return Err(CgadError::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, k } => {
                let d = Dims::of(&self.nodes[x.0].shape).expect("conv input is 4-D");
                let c_out = node.shape[1];
                let out_len = node.shape[3];
                let start = d.time - out_len;
                let (xv, wv) = (val(*x), val(*w));
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; c_out];
                for bi in 0..d.batch {
                    for co in 0..c_out {
                        for n in 0..d.node {
                            let o = ((bi * c_out + co) * d.node + n) * out_len;
                            let grow = &g[o..o + out_len];
                            db[co] += grow.iter().sum::<f64>();
                            for ci in 0..d.chan {
                                let xo = ((bi * d.chan + ci) * d.node + n) * d.time;
                                let wo = (co * d.chan + ci) * k;
                                for s in 0..*k {
                                    let lo = xo + start - s;
                                    let xs = &xv[lo..lo + out_len];
                                    dw[wo + s] += grow.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                                    let wk = wv[wo + s];
                                    dx[lo..lo + out_len].iter_mut().zip(grow).for_each(|(d, &gv)| *d += wk * gv);
                                }
                            }
                        }
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                if let Some(b) = b {
                    accumulate(grads, *b, db);
                }
            }
            Op::TakeLast { x } => {
                let full = self.nodes[x.0].shape[3];
                let keep = node.shape[3];
                let mut dx = vec![0.0; val(*x).len()];
                for (drow, grow) in dx.chunks_mut(full).zip(g.chunks(keep)) {
                    drow[full - keep..].copy_from_slice(grow);
                }
                accumulate(grads, *x, dx);
            }
            Op::Concat { parts } => {
                let batch = node.shape[0];
                let plane = node.shape[2] * node.shape[3];
                let total = node.shape[1] * plane;
                let mut offset = 0;
                for &p in parts {
                    let span = self.nodes[p.0].shape[1] * plane;
                    let mut dp = Vec::with_capacity(batch * span);
                    for bi in 0..batch {
                        dp.extend_from_slice(&g[bi * total + offset..bi * total + offset + span]);
                    }
                    offset += span;
                    accumulate(grads, p, dp);
                }
            }
            Op::Tanh(x) => {
                let dx = node.value.iter().zip(g).map(|(&y, &gv)| gv * (1.0 - y * y)).collect();
                accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = node.value.iter().zip(g).map(|(&y, &gv)| gv * y * (1.0 - y)).collect();
                accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let dx = val(*x).iter().zip(g).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect();
                accumulate(grads, *x, dx);
            }
            Op::Scale(x, c) => {
                accumulate(grads, *x, g.iter().map(|v| v * c).collect());
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let da = val(*b).iter().zip(g).map(|(y, gv)| y * gv).collect();
                let db = val(*a).iter().zip(g).map(|(y, gv)| y * gv).collect();
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::NodeMix { x, mix } => {
                let (n, time) = (node.shape[2], node.shape[3]);
                let plane = n * time;
                let mut dx = vec![0.0; g.len()];
                for (dplane, gplane) in dx.chunks_mut(plane).zip(g.chunks(plane)) {
                    for i in 0..n {
                        let grow = &gplane[i * time..(i + 1) * time];
                        for j in 0..n {
                            let m = mix[i * n + j];
                            if m != 0.0 {
                                dplane[j * time..(j + 1) * time]
                                    .iter_mut()
                                    .zip(grow)
                                    .for_each(|(d, &gv)| *d += m * gv);
                            }
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Mse { pred, target, batch } => {
                let scale = 2.0 * g[0] / *batch as f64;
                let dp = val(*pred).iter().zip(target.iter()).map(|(p, t)| scale * (p - t)).collect();
                accumulate(grads, *pred, dp);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
