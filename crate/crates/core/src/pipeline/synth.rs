//! Lag-coupled autoregressive test data with injected level shifts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::causal::CausalGraph;
use crate::error::{CgadError, Result};
use crate::series::MultivariateSeries;

/// `x_target(t) += gain * x_source(t - lag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
    pub gain: f64,
}

/// Adds `offset` to `node` on test steps `start..end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anomaly {
    pub start: usize,
    pub end: usize,
    pub node: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_sensors: usize,
    pub train_len: usize,
    pub test_len: usize,
    /// Own-lag coefficient shared by every sensor.
    pub ar_coef: f64,
    pub noise_sigma: f64,
    pub coupling: Vec<Coupling>,
    /// Windows are indices into the test segment.
    pub anomalies: Vec<Anomaly>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Ten sensors on a directed ring with five level shifts in the test part.
    fn default() -> Self {
        let n = 10;
        Self {
            n_sensors: n,
            train_len: 3000,
            test_len: 2000,
            ar_coef: 0.3,
            noise_sigma: 1.0,
            coupling: (0..n)
                .map(|i| Coupling { source: i, target: (i + 1) % n, lag: 1, gain: 0.6 })
                .collect(),
            anomalies: [(200, 250, 1), (550, 590, 3), (900, 960, 5), (1300, 1340, 7), (1700, 1760, 9)]
                .into_iter()
                .map(|(start, end, node)| Anomaly { start, end, node, offset: 8.0 })
                .collect(),
            seed: 0,
        }
    }
}

/// Samples discarded before the train segment so it starts near stationarity.
const BURN_IN: usize = 500;

/// Generated train and labelled test series plus the true coupling graph.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: MultivariateSeries,
    pub test: MultivariateSeries,
    pub truth: CausalGraph,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CgadError::Config(m));
        if self.n_sensors == 0 {
            return bad("n_sensors must be at least 1".into());
        }
        if self.train_len < 2 || self.test_len < 2 {
            return bad("train_len and test_len must be at least 2".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !self.ar_coef.is_finite() {
            return bad("noise_sigma must be a nonnegative number and ar_coef finite".into());
        }
        for c in &self.coupling {
            if c.lag == 0 {
                return bad(format!("coupling {} -> {} has lag 0; lags start at 1", c.source, c.target));
            }
            if c.source >= self.n_sensors || c.target >= self.n_sensors || c.source == c.target {
                return bad(format!("coupling {} -> {} is not between two distinct sensors", c.source, c.target));
            }
            if !c.gain.is_finite() {
                return bad(format!("coupling {} -> {} has a non-finite gain", c.source, c.target));
            }
        }
        for a in &self.anomalies {
            if a.start >= a.end || a.end > self.test_len {
                return bad(format!(
                    "anomaly window [{}, {}) is empty or outside the test segment of {} steps",
                    a.start, a.end, self.test_len
                ));
            }
            if a.node >= self.n_sensors || !a.offset.is_finite() {
                return bad(format!("anomaly on sensor {} with offset {} is invalid", a.node, a.offset));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let n = self.n_sensors;
        let total = BURN_IN + self.train_len + self.test_len;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| CgadError::Config(e.to_string()))?;
        let mut x = vec![vec![0.0; total]; n];
        for t in 0..total {
            for i in 0..n {
                let own = if t > 0 { self.ar_coef * x[i][t - 1] } else { 0.0 };
                x[i][t] = own + noise.sample(&mut rng);
            }
            for c in &self.coupling {
                if t >= c.lag {
                    x[c.target][t] += c.gain * x[c.source][t - c.lag];
                }
            }
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CgadError::Numeric("synthetic system diverged; reduce ar_coef or gains".into()));
        }
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let split = BURN_IN + self.train_len;
        let train = MultivariateSeries::new(x.iter().map(|r| r[BURN_IN..split].to_vec()).collect(), names.clone())?;
        let mut test_rows: Vec<Vec<f64>> = x.iter().map(|r| r[split..].to_vec()).collect();
        let mut labels = vec![0u8; self.test_len];
        for a in &self.anomalies {
            test_rows[a.node][a.start..a.end].iter_mut().for_each(|v| *v += a.offset);
            labels[a.start..a.end].iter_mut().for_each(|l| *l = 1);
        }
        let test = MultivariateSeries::new(test_rows, names.clone())?.with_labels(labels)?;
        let mut adjacency = vec![vec![0.0; n]; n];
        for c in &self.coupling {
            adjacency[c.target][c.source] += c.gain.abs();
        }
        let truth = CausalGraph::new(adjacency, names)?;
        Ok(SyntheticData { train, test, truth })
    }
}
