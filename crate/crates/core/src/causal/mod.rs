//! Transfer-entropy causal graph construction.
//!
//! Entry `(i, j)` of the adjacency matrix is the transfer entropy from series
//! `j` to series `i`, averaged over randomly placed chunks of the training
//! series and pruned below a small constant.

mod events;
mod histogram;
mod io;
mod knn;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgadError, Result};
use crate::series::MultivariateSeries;

pub use events::{windowed_te, BlockTe};
pub use histogram::{
    conditional_entropy, encode_histogram, entropy, histogram_te_symbols, joint_entropy, HistogramEncoding,
    MAX_TE_STATES,
};
pub use io::{load_graph, save_graph, save_graph_with_header};
pub use knn::ksg_transfer_entropy;

use histogram::TeCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeEstimator {
    HistogramPlugin,
    KnnKraskov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeConfig {
    pub estimator: TeEstimator,
    /// Histogram bins `D`.
    pub bin_count: usize,
    /// Target history length `q`.
    pub target_history: usize,
    /// Source history length `o`.
    pub source_history: usize,
    pub knn_k: usize,
    /// Chunk length; `None` means `min(2000, T - 1)`.
    pub chunk_window: Option<usize>,
    /// Number of sampled chunks `G`.
    pub samples: usize,
    /// Edges with averaged TE `<= prune_threshold` are dropped.
    pub prune_threshold: f64,
    pub rng_seed: u64,
}

impl Default for TeConfig {
    fn default() -> Self {
        Self {
            estimator: TeEstimator::HistogramPlugin,
            bin_count: 8,
            target_history: 1,
            source_history: 1,
            knn_k: 4,
            chunk_window: None,
            samples: 5,
            prune_threshold: 0.01,
            rng_seed: 0,
        }
    }
}

impl TeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CgadError::Config(msg));
        if self.target_history == 0 || self.source_history == 0 {
            return fail("history lengths q and o must be >= 1".into());
        }
        if self.bin_count < 2 {
            return fail(format!("bin_count must be >= 2, got {}", self.bin_count));
        }
        if self.samples == 0 {
            return fail("samples must be >= 1".into());
        }
        if !(self.prune_threshold >= 0.0) {
            return fail(format!("prune_threshold must be >= 0, got {}", self.prune_threshold));
        }
        if self.estimator == TeEstimator::KnnKraskov && self.knn_k == 0 {
            return fail("knn_k must be >= 1".into());
        }
        if self.estimator == TeEstimator::HistogramPlugin
            && TeCounts::state_space(self.bin_count, self.target_history, self.source_history).is_none()
        {
            return fail(format!(
                "bin_count^(1+q+o) exceeds {MAX_TE_STATES} joint states"
            ));
        }
        if let Some(w) = self.chunk_window {
            if w < self.min_chunk() {
                return fail(format!("chunk_window {w} shorter than q + o + 1"));
            }
        }
        Ok(())
    }

    fn min_chunk(&self) -> usize {
        let hist = self.target_history + self.source_history + 1;
        match self.estimator {
            TeEstimator::HistogramPlugin => hist,
            TeEstimator::KnnKraskov => hist.max(self.knn_k + 2 + self.target_history.max(self.source_history)),
        }
    }

    /// Effective chunk length for a series of length `len`.
    pub fn chunk_len(&self, len: usize) -> usize {
        self.chunk_window.unwrap_or_else(|| 2000.min(len.saturating_sub(1)))
    }
}

/// Transfer entropy `source -> target` in bits.
///
/// The histogram path symbolizes each sequence over its own range; the k-NN
/// path works on raw values and floors negative estimates at zero.
pub fn transfer_entropy(target: &[f64], source: &[f64], cfg: &TeConfig) -> Result<f64> {
    if target.len() != source.len() {
        return Err(CgadError::Dimension(format!(
            "target has {} values, source {}",
            target.len(),
            source.len()
        )));
    }
    let (q, o) = (cfg.target_history, cfg.source_history);
    match cfg.estimator {
        TeEstimator::HistogramPlugin => {
            if target.len() < q + o + 1 {
                return Err(CgadError::Argument(format!(
                    "sequence of length {} shorter than q + o + 1",
                    target.len()
                )));
            }
            let t = encode_histogram(target, cfg.bin_count);
            let s = encode_histogram(source, cfg.bin_count);
            histogram_te_symbols(&t.symbols, &s.symbols, cfg.bin_count, q, o)
        }
        TeEstimator::KnnKraskov => Ok(ksg_transfer_entropy(target, source, q, o, cfg.knn_k)?.max(0.0)),
    }
}

/// Weighted directed graph; `adjacency[i][j]` is the influence of `j` on `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    pub adjacency: Vec<Vec<f64>>,
    pub node_names: Vec<String>,
}

impl CausalGraph {
    pub fn new(adjacency: Vec<Vec<f64>>, node_names: Vec<String>) -> Result<Self> {
        let n = node_names.len();
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(CgadError::Dimension(format!("adjacency must be {n} x {n}")));
        }
        for (i, row) in adjacency.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(CgadError::Argument(format!("edge weight ({i},{j}) = {w} is not a finite non-negative value")));
                }
                if i == j && w != 0.0 {
                    return Err(CgadError::Argument(format!("self-loop on node {i}")));
                }
            }
        }
        Ok(Self { adjacency, node_names })
    }

    /// Applies the pruning rule: keep `te` when `te > threshold`, else 0.
    pub fn from_te_matrix(te: &[Vec<f64>], node_names: Vec<String>, threshold: f64) -> Result<Self> {
        let adjacency = te
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| if i != j && v > threshold { v } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(adjacency, node_names)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&w| w != 0.0).count()
    }

    /// Out-degree of node `j`: nonzero entries in column `j`.
    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .map(|j| self.adjacency.iter().filter(|row| row[j] != 0.0).count())
            .collect()
    }
}

/// Averaged, unpruned TE matrix over `G` random chunks.
pub fn average_te_matrix(train: &MultivariateSeries, cfg: &TeConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let len = train.len();
    let w = cfg.chunk_len(len);
    if w < cfg.min_chunk() {
        return Err(CgadError::Argument(format!(
            "chunk window {w} too short for the configured histories"
        )));
    }
    if len < w + 1 {
        return Err(CgadError::Argument(format!(
            "series of length {len} too short for chunk window {w}"
        )));
    }
    let n = train.n_sensors();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let starts: Vec<usize> = (0..cfg.samples).map(|_| rng.random_range(0..=len - w - 1)).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();

    let mut total = vec![vec![0.0; n]; n];
    for &start in &starts {
        let chunk: Vec<&[f64]> = train.values().iter().map(|r| &r[start..start + w]).collect();
        let values = chunk_te(&chunk, &pairs, cfg)?;
        for (&(i, j), v) in pairs.iter().zip(values) {
            total[i][j] += v;
        }
    }
    let g = cfg.samples as f64;
    total.iter_mut().flatten().for_each(|v| *v /= g);
    Ok(total)
}

fn chunk_te(chunk: &[&[f64]], pairs: &[(usize, usize)], cfg: &TeConfig) -> Result<Vec<f64>> {
    let (q, o) = (cfg.target_history, cfg.source_history);
    match cfg.estimator {
        TeEstimator::HistogramPlugin => {
            let symbols: Vec<Vec<u32>> = chunk
                .iter()
                .map(|row| encode_histogram(row, cfg.bin_count).symbols)
                .collect();
            Ok(pairs
                .par_iter()
                .map_init(
                    || TeCounts::new(cfg.bin_count, q, o),
                    |counts, &(i, j)| {
                        counts.fill(&symbols[i], &symbols[j], q, o);
                        counts.transfer_entropy()
                    },
                )
                .collect())
        }
        TeEstimator::KnnKraskov => pairs
            .par_iter()
            .map(|&(i, j)| Ok(ksg_transfer_entropy(chunk[i], chunk[j], q, o, cfg.knn_k)?.max(0.0)))
            .collect(),
    }
}

/// Sampled, averaged and pruned causal graph of a (normalized) training series.
pub fn generate_graph(train: &MultivariateSeries, cfg: &TeConfig) -> Result<CausalGraph> {
    let te = average_te_matrix(train, cfg)?;
    CausalGraph::from_te_matrix(&te, train.sensor_names().to_vec(), cfg.prune_threshold)
}

/// Out-degree to node count.
pub fn degree_histogram(graph: &CausalGraph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for d in graph.out_degrees() {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

/// Complete digraph over the same nodes, weights taken from `te`
/// (floored at a tiny positive value so every edge exists).
pub fn fully_connected_reference(te: &[Vec<f64>], node_names: Vec<String>) -> Result<CausalGraph> {
    let adjacency = te
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| if i == j { 0.0 } else { v.max(f64::MIN_POSITIVE) })
                .collect()
        })
        .collect();
    CausalGraph::new(adjacency, node_names)
}

/// Keeps, for every target node, its `k` strongest incoming edges.
pub fn top_k_reference(te: &[Vec<f64>], node_names: Vec<String>, k: usize) -> Result<CausalGraph> {
    let n = te.len();
    let mut adjacency = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut sources: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        sources.sort_by(|&a, &b| te[i][b].total_cmp(&te[i][a]).then(a.cmp(&b)));
        for &j in sources.iter().take(k) {
            adjacency[i][j] = te[i][j].max(f64::MIN_POSITIVE);
        }
    }
    CausalGraph::new(adjacency, node_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn coupled_pair(len: usize, seed: u64) -> MultivariateSeries {
        let x0 = noise(len, seed);
        let eps = noise(len, seed + 1);
        let mut x1 = vec![0.0; len];
        for t in 1..len {
            x1[t] = x0[t - 1] + 0.1 * eps[t];
        }
        MultivariateSeries::from_rows(vec![x0, x1]).unwrap()
    }

    #[test]
    fn coupled_pair_yields_single_direction() {
        let s = coupled_pair(20_000, 11);
        let cfg = TeConfig {
            samples: 1,
            chunk_window: Some(s.len() - 1),
            prune_threshold: 0.05,
            ..TeConfig::default()
        };
        // direct full-series check of the two directions
        let forward = transfer_entropy(s.row(1), s.row(0), &cfg).unwrap();
        let backward = transfer_entropy(s.row(0), s.row(1), &cfg).unwrap();
        assert!(forward > 1.0 && backward < 0.05, "{forward} {backward}");

        let g = generate_graph(&s, &cfg).unwrap();
        assert!(g.adjacency[1][0] > 1.0);
        assert_eq!(g.adjacency[0][1], 0.0);
    }

    #[test]
    fn single_chunk_equals_direct_te() {
        let s = coupled_pair(600, 5);
        let cfg = TeConfig {
            samples: 1,
            chunk_window: Some(s.len() - 1),
            prune_threshold: 0.0,
            ..TeConfig::default()
        };
        let g = average_te_matrix(&s, &cfg).unwrap();
        let head = s.slice(0, s.len() - 1).unwrap();
        assert_eq!(g[1][0], transfer_entropy(head.row(1), head.row(0), &cfg).unwrap());
        assert_eq!(g[0][1], transfer_entropy(head.row(0), head.row(1), &cfg).unwrap());
        assert_eq!((g[0][0], g[1][1]), (0.0, 0.0));
    }

    #[test]
    fn huge_threshold_prunes_everything() {
        let s = coupled_pair(800, 9);
        let cfg = TeConfig {
            prune_threshold: 100.0,
            chunk_window: Some(400),
            ..TeConfig::default()
        };
        let g = generate_graph(&s, &cfg).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let s = coupled_pair(50, 1);
        let cfg = TeConfig {
            chunk_window: Some(50),
            ..TeConfig::default()
        };
        assert!(matches!(generate_graph(&s, &cfg), Err(CgadError::Argument(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TeConfig { target_history: 0, ..TeConfig::default() },
            TeConfig { bin_count: 1, ..TeConfig::default() },
            TeConfig { samples: 0, ..TeConfig::default() },
            TeConfig { prune_threshold: -1.0, ..TeConfig::default() },
            TeConfig { chunk_window: Some(2), ..TeConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(CgadError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn degree_histogram_examples() {
        let names = |n: usize| (0..n).map(|i| format!("n{i}")).collect::<Vec<_>>();
        let zero = CausalGraph::new(vec![vec![0.0; 3]; 3], names(3)).unwrap();
        assert_eq!(degree_histogram(&zero), BTreeMap::from([(0, 3)]));
        let full = CausalGraph::new(
            (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect(),
            names(3),
        )
        .unwrap();
        assert_eq!(degree_histogram(&full), BTreeMap::from([(2, 3)]));
        let single = CausalGraph::new(vec![vec![0.0, 0.0], vec![0.5, 0.0]], names(2)).unwrap();
        assert_eq!(degree_histogram(&single), BTreeMap::from([(0, 1), (1, 1)]));
    }

    #[test]
    fn reference_structures() {
        let te = vec![vec![0.0, 0.3, 0.1], vec![0.2, 0.0, 0.4], vec![0.0, 0.0, 0.0]];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let full = fully_connected_reference(&te, names.clone()).unwrap();
        assert_eq!(full.edge_count(), 6);
        let top = top_k_reference(&te, names, 1).unwrap();
        assert_eq!(top.edge_count(), 3);
        assert!(top.adjacency[0][1] > 0.0 && top.adjacency[1][2] > 0.0);
    }

    #[test]
    fn sampled_graph_is_deterministic_and_permutation_equivariant() {
        let len = 3000;
        let x0 = noise(len, 21);
        let e1 = noise(len, 22);
        let e2 = noise(len, 23);
        let mut x1 = vec![0.0; len];
        let mut x2 = vec![0.0; len];
        for t in 1..len {
            x1[t] = 0.8 * x0[t - 1] + 0.4 * e1[t];
            x2[t] = 0.7 * x1[t - 1] + 0.5 * e2[t];
        }
        let s = MultivariateSeries::from_rows(vec![x0, x1, x2]).unwrap();
        let cfg = TeConfig {
            chunk_window: Some(1000),
            rng_seed: 77,
            ..TeConfig::default()
        };
        let a = average_te_matrix(&s, &cfg).unwrap();
        let b = average_te_matrix(&s, &cfg).unwrap();
        assert_eq!(a, b);

        let order = [2, 0, 1];
        let p = average_te_matrix(&s.permute_sensors(&order).unwrap(), &cfg).unwrap();
        for (r, &i) in order.iter().enumerate() {
            for (c, &j) in order.iter().enumerate() {
                assert_eq!(p[r][c], a[i][j]);
            }
        }
    }

    #[test]
    fn pruning_is_monotone() {
        let s = coupled_pair(2000, 4);
        let te = average_te_matrix(&s, &TeConfig { chunk_window: Some(1000), ..TeConfig::default() }).unwrap();
        let names = s.sensor_names().to_vec();
        let mut last = usize::MAX;
        for c in [0.0, 0.001, 0.01, 0.1, 0.5, 1.0, 5.0] {
            let edges = CausalGraph::from_te_matrix(&te, names.clone(), c).unwrap().edge_count();
            assert!(edges <= last);
            last = edges;
        }
    }

    #[test]
    fn knn_estimator_path() {
        let s = coupled_pair(1200, 8);
        let cfg = TeConfig {
            estimator: TeEstimator::KnnKraskov,
            samples: 2,
            chunk_window: Some(500),
            prune_threshold: 0.1,
            ..TeConfig::default()
        };
        let g = generate_graph(&s, &cfg).unwrap();
        assert!(g.adjacency[1][0] > 1.0);
        assert_eq!(g.adjacency[0][1], 0.0);
    }
}
