//! Kraskov-style k-nearest-neighbour transfer entropy.
//!
//! Transfer entropy `source -> target` is the conditional mutual information
//! `I(X_t ; Z | Y)` with `X_t` the next target value, `Y` the target history
//! and `Z` the source history. It is estimated with the KSG construction for
//! conditional mutual information: max-norm distance to the k-th neighbour in
//! the joint space fixes a radius per sample, and neighbour counts strictly
//! inside that radius in the marginal spaces enter through digamma terms.

use crate::error::{CgadError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `psi(n)` for positive integers via harmonic numbers.
struct Digamma {
    table: Vec<f64>,
}

impl Digamma {
    fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(f64::NAN);
        let mut harmonic = 0.0;
        for m in 1..=n {
            table.push(harmonic - EULER_GAMMA);
            harmonic += 1.0 / m as f64;
        }
        Self { table }
    }

    fn at(&self, n: usize) -> f64 {
        self.table[n]
    }
}

/// Estimate in bits. May be slightly negative; callers floor it.
pub fn ksg_transfer_entropy(target: &[f64], source: &[f64], q: usize, o: usize, k: usize) -> Result<f64> {
    if target.len() != source.len() {
        return Err(CgadError::Dimension("target and source lengths differ".into()));
    }
    if k == 0 {
        return Err(CgadError::Argument("knn_k must be positive".into()));
    }
    let start = q.max(o);
    if target.len() < k + 2 || target.len() < start + k + 1 {
        return Err(CgadError::Argument(format!(
            "sequence of length {} too short for k={k}, q={q}, o={o}",
            target.len()
        )));
    }
    let m = target.len() - start;
    // Per-sample coordinates: next value, target history, source history.
    let next: Vec<f64> = target[start..].to_vec();
    let hist_t: Vec<f64> = (start..target.len())
        .flat_map(|t| (1..=q).map(move |lag| target[t - lag]))
        .collect();
    let hist_s: Vec<f64> = (start..source.len())
        .flat_map(|t| (1..=o).map(move |lag| source[t - lag]))
        .collect();

    let max_dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));

    let psi = Digamma::up_to(m + 1);
    let mut dx = vec![0.0; m];
    let mut dy = vec![0.0; m];
    let mut dz = vec![0.0; m];
    let mut nearest: Vec<f64> = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    for i in 0..m {
        let yi = &hist_t[i * q..(i + 1) * q];
        let zi = &hist_s[i * o..(i + 1) * o];
        nearest.clear();
        for j in 0..m {
            dx[j] = (next[i] - next[j]).abs();
            dy[j] = max_dist(yi, &hist_t[j * q..(j + 1) * q]);
            dz[j] = max_dist(zi, &hist_s[j * o..(j + 1) * o]);
            if j == i {
                continue;
            }
            let d = dx[j].max(dy[j]).max(dz[j]);
            if nearest.len() < k || d < nearest[k - 1] {
                let pos = nearest.partition_point(|&v| v <= d);
                nearest.insert(pos, d);
                nearest.truncate(k);
            }
        }
        let eps = nearest[k - 1];
        let (mut n_xy, mut n_yz, mut n_y) = (0usize, 0usize, 0usize);
        for j in (0..m).filter(|&j| j != i) {
            if dy[j] < eps {
                n_y += 1;
                if dx[j] < eps {
                    n_xy += 1;
                }
                if dz[j] < eps {
                    n_yz += 1;
                }
            }
        }
        acc += psi.at(n_xy + 1) + psi.at(n_yz + 1) - psi.at(n_y + 1);
    }
    let nats = psi.at(k) - acc / m as f64;
    Ok(nats / std::f64::consts::LN_2)
}
