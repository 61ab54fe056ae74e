//! Building blocks of the forecaster, expressed as tape operations.

use std::rc::Rc;

use super::tape::{Tape, Var};
use crate::error::{CgadError, Result};

/// `D^-1/2 (A + I) D^-1/2` with `D` the row sums of `A + I`.
///
/// Edge weights enter as-is; the matrix is not symmetrized.
pub fn normalize_adjacency(adjacency: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = adjacency.len();
    if adjacency.iter().any(|r| r.len() != n) {
        return Err(CgadError::Dimension("adjacency must be square".into()));
    }
    if let Some((i, j)) = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| !(adjacency[i][j] >= 0.0))
    {
        return Err(CgadError::Argument(format!(
            "adjacency entry ({i},{j}) = {} is negative",
            adjacency[i][j]
        )));
    }
    let with_loops: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| adjacency[i][j] + if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let inv_sqrt: Vec<f64> = with_loops.iter().map(|r| 1.0 / r.iter().sum::<f64>().sqrt()).collect();
    Ok((0..n)
        .map(|i| (0..n).map(|j| inv_sqrt[i] * with_loops[i][j] * inv_sqrt[j]).collect())
        .collect())
}

/// Receptive field `m (k - 1) + 1` of `m` stacked causal convolutions.
pub fn receptive_field(layers: usize, kernel: usize) -> usize {
    layers * (kernel - 1) + 1
}

/// Two-layer propagation `ReLU(A ReLU(A H W0) W1)` applied independently at
/// every batch entry and time step; `h` is `[B, C, N, L]`, `w0` is
/// `[H, C, 1]` and `w1` is `[F, H, 1]`.
pub fn gcn_forward(tape: &mut Tape, h: Var, adjacency: &Rc<Vec<f64>>, w0: Var, w1: Var) -> Result<Var> {
    let shape = tape.shape(h).to_vec();
    if shape.len() != 4 || adjacency.len() != shape[2] * shape[2] {
        return Err(CgadError::Dimension(format!(
            "gcn input {shape:?} does not match a {}-entry adjacency",
            adjacency.len()
        )));
    }
    let time = shape[3];
    // Propagate at the narrower channel width: A (H W0) = (A H) W0.
    let mixed = tape.node_mix(h, adjacency.clone())?;
    let hidden = tape.conv(mixed, w0, None, time)?;
    let hidden = tape.relu(hidden);
    let projected = tape.conv(hidden, w1, None, time)?;
    let out = tape.node_mix(projected, adjacency.clone())?;
    Ok(tape.relu(out))
}

/// One inception branch: weight `[Cout, Cin, k]` and bias `[Cout]`.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub weight: Var,
    pub bias: Var,
}

/// Parallel causal convolutions with different kernel sizes, each cut to
/// the length of the longest-kernel branch and concatenated on channels.
pub fn inception_forward(tape: &mut Tape, z: Var, branches: &[Branch]) -> Result<Var> {
    let shape = tape.shape(z).to_vec();
    if shape.len() != 4 {
        return Err(CgadError::Dimension(format!("inception input {shape:?} is not 4-D")));
    }
    let widest = branches
        .iter()
        .map(|b| tape.shape(b.weight).get(2).copied().unwrap_or(0))
        .max()
        .ok_or_else(|| CgadError::Argument("inception needs at least one branch".into()))?;
    if shape[3] < widest {
        return Err(CgadError::Argument(format!(
            "time length {} shorter than the largest kernel {widest}",
            shape[3]
        )));
    }
    let out_len = shape[3] - widest + 1;
    let outs = branches
        .iter()
        .map(|b| tape.conv(z, b.weight, Some(b.bias), out_len))
        .collect::<Result<Vec<_>>>()?;
    tape.concat(&outs)
}

/// `tanh(filter * z + b1) ⊙ sigmoid(gate * z + b2)`.
pub fn gated_tc_forward(tape: &mut Tape, z: Var, filter: &[Branch], gate: &[Branch]) -> Result<Var> {
    let f = inception_forward(tape, z, filter)?;
    let g = inception_forward(tape, z, gate)?;
    if tape.shape(f) != tape.shape(g) {
        return Err(CgadError::Dimension(format!(
            "filter output {:?} and gate output {:?} differ",
            tape.shape(f),
            tape.shape(g)
        )));
    }
    let f = tape.tanh(f);
    let g = tape.sigmoid(g);
    tape.mul(f, g)
}
