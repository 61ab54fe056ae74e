//! Peaks-over-threshold calibration with a generalized Pareto tail.

use serde::{Deserialize, Serialize};

use crate::error::{CgadError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotConfig {
    pub initial_quantile: f64,
    pub risk_q: f64,
    pub min_peaks: usize,
}

impl Default for PotConfig {
    fn default() -> Self {
        Self { initial_quantile: 0.98, risk_q: 1e-4, min_peaks: 10 }
    }
}

impl PotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_quantile > 0.0 && self.initial_quantile < 1.0) {
            return Err(CgadError::Config(format!(
                "initial_quantile {} must lie in (0, 1)",
                self.initial_quantile
            )));
        }
        if !(self.risk_q > 0.0 && self.risk_q.is_finite()) {
            return Err(CgadError::Config(format!("risk_q {} must be positive", self.risk_q)));
        }
        if self.min_peaks == 0 {
            return Err(CgadError::Config("min_peaks must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotMethod {
    Grimshaw,
    MomentsFallback,
}

/// Fitted tail and the resulting threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PotFit {
    pub initial_threshold: f64,
    pub shape: f64,
    pub scale: f64,
    pub n_peaks: usize,
    pub len: usize,
    pub method: PotMethod,
    pub threshold: f64,
}

pub fn pot_threshold(scores: &[f64], cfg: &PotConfig) -> Result<f64> {
    pot_fit(scores, cfg).map(|f| f.threshold)
}

pub fn pot_fit(scores: &[f64], cfg: &PotConfig) -> Result<PotFit> {
    cfg.validate()?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CgadError::Numeric("scores contain non-finite values".into()));
    }
    let len = scores.len();
    let needed = cfg.min_peaks as f64 / (1.0 - cfg.initial_quantile);
    if (len as f64) < needed {
        return Err(CgadError::Config(format!(
            "{len} scores are too few for {} peaks above the {} quantile (need {})",
            cfg.min_peaks,
            cfg.initial_quantile,
            needed.ceil()
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let u = sorted[((cfg.initial_quantile * len as f64).floor() as usize).min(len - 1)];
    let peaks: Vec<f64> = scores.iter().filter(|&&s| s > u).map(|s| s - u).collect();
    if peaks.len() < cfg.min_peaks {
        return Err(CgadError::Config(format!(
            "only {} excesses over the initial threshold {u} (need {}); lower initial_quantile",
            peaks.len(),
            cfg.min_peaks
        )));
    }
    let (shape, scale, method) = match grimshaw(&peaks) {
        Some((xi, sigma)) => (xi, sigma, PotMethod::Grimshaw),
        None => {
            let (xi, sigma) = moments(&peaks);
            (xi, sigma, PotMethod::MomentsFallback)
        }
    };
    let r = cfg.risk_q * len as f64 / peaks.len() as f64;
    let threshold = if shape.abs() < 1e-8 {
        u - scale * r.ln()
    } else {
        u + scale / shape * (r.powf(-shape) - 1.0)
    };
    if !threshold.is_finite() {
        return Err(CgadError::Numeric(format!("tail fit produced threshold {threshold}")));
    }
    Ok(PotFit { initial_threshold: u, shape, scale, n_peaks: peaks.len(), len, method, threshold })
}

/// Log-likelihood of excesses under a generalized Pareto distribution.
fn log_likelihood(y: &[f64], xi: f64, sigma: f64) -> f64 {
    let n = y.len() as f64;
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    if xi.abs() < 1e-8 {
        return -n * sigma.ln() - y.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &v in y {
        let z = 1.0 + xi * v / sigma;
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += z.ln();
    }
    -n * sigma.ln() - (1.0 + 1.0 / xi) * acc
}

/// Shape and scale implied by a root `t` of the profile equation.
fn from_root(y: &[f64], t: f64) -> (f64, f64) {
    let xi = y.iter().map(|v| (1.0 + t * v).ln()).sum::<f64>() / y.len() as f64;
    (xi, xi / t)
}

/// `u(t) v(t) - 1` whose roots are the likelihood stationary points.
fn profile(y: &[f64], t: f64) -> f64 {
    let n = y.len() as f64;
    let u = y.iter().map(|v| 1.0 / (1.0 + t * v)).sum::<f64>() / n;
    let v = 1.0 + y.iter().map(|v| (1.0 + t * v).ln()).sum::<f64>() / n;
    u * v - 1.0
}

/// Geometric progression of `count` points from `a` to `b` (both positive).
fn geometric(a: f64, b: f64, count: usize) -> impl Iterator<Item = f64> {
    let ratio = (b / a).ln() / (count - 1) as f64;
    (0..count).map(move |k| a * (ratio * k as f64).exp())
}

/// Roots of `profile` between consecutive points of `grid` with a sign
/// change, refined by bisection.
fn roots(y: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let values: Vec<f64> = grid.iter().map(|&t| profile(y, t)).collect();
    for k in 1..grid.len() {
        let (fa0, fb) = (values[k - 1], values[k]);
        if !(fa0.is_finite() && fb.is_finite()) || fa0 == 0.0 || fa0.signum() == fb.signum() {
            continue;
        }
        let (mut a, mut fa, mut b) = (grid[k - 1], fa0, grid[k]);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            let fm = profile(y, m);
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

/// Maximum-likelihood fit over the profile roots and the exponential case.
///
/// Roots are searched on `(-1/max(y), 0)` and `(0, inf)` with grids that are
/// geometric towards zero and towards the pole at `-1/max(y)`.
fn grimshaw(y: &[f64]) -> Option<(f64, f64)> {
    const POINTS: usize = 200;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(mean > 0.0) {
        return None;
    }
    let mut negative: Vec<f64> = geometric(1e-4, 0.5, POINTS)
        .chain(geometric(0.5, 1e-10, POINTS).skip(1).map(|g| 1.0 - g))
        .map(|x| -x / ymax)
        .collect();
    negative.reverse();
    let upper = if ymin > 0.0 { (2.0 * (mean - ymin) / (ymin * ymin)).max(1e4 / mean) } else { 1e8 / mean };
    let positive: Vec<f64> = geometric(1e-4 / mean, upper, 2 * POINTS).collect();

    let mut candidates = vec![(0.0, mean)];
    for grid in [&negative, &positive] {
        candidates.extend(roots(y, grid).into_iter().map(|t| from_root(y, t)));
    }
    candidates
        .into_iter()
        .filter(|&(xi, s)| xi.is_finite() && s.is_finite() && s > 0.0)
        .map(|(xi, s)| (log_likelihood(y, xi, s), xi, s))
        .filter(|(ll, _, _)| ll.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, xi, s)| (xi, s))
}

/// Method-of-moments shape and scale.
fn moments(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return (0.0, mean.max(f64::MIN_POSITIVE));
    }
    let ratio = mean * mean / var;
    (0.5 * (1.0 - ratio), 0.5 * mean * (ratio + 1.0))
}
