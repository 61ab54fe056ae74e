//! Forecast errors to anomaly decisions.
//!
//! Per-sensor absolute errors are standardized with the median and the
//! median absolute deviation, the collective score takes the maximum over
//! sensors, and a threshold fitted by peaks-over-threshold turns it into
//! binary decisions.

mod io;
mod pot;

pub use io::{read_scores, write_scores};
pub use pot::{pot_fit, pot_threshold, PotConfig, PotFit, PotMethod};

use crate::error::{CgadError, Result};

/// Floor applied to a vanishing MAD.
pub const MAD_FLOOR: f64 = 1e-9;

/// Scores, threshold and decisions of one test period.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    /// Absolute time index of each scored step.
    pub time_index: Vec<usize>,
    pub node_names: Vec<String>,
    /// `N x Tt`.
    pub per_node_scores: Vec<Vec<f64>>,
    pub collective: Vec<f64>,
    pub threshold: f64,
    pub decisions: Vec<u8>,
    pub per_node_median: Vec<f64>,
    pub per_node_mad: Vec<f64>,
}

impl ScoreSeries {
    /// Assembles the series from per-node scores, enforcing the max and
    /// threshold relations.
    pub fn new(
        time_index: Vec<usize>,
        node_names: Vec<String>,
        scores: RobustScores,
        threshold: f64,
    ) -> Result<Self> {
        let collective = collective_score(&scores.scores)?;
        if collective.len() != time_index.len() || node_names.len() != scores.scores.len() {
            return Err(CgadError::Dimension(format!(
                "{} nodes x {} steps of scores for {} names and {} time indices",
                scores.scores.len(),
                collective.len(),
                node_names.len(),
                time_index.len()
            )));
        }
        let decisions = detect(&collective, threshold);
        Ok(Self {
            time_index,
            node_names,
            per_node_scores: scores.scores,
            collective,
            threshold,
            decisions,
            per_node_median: scores.median,
            per_node_mad: scores.mad,
        })
    }
}

/// `|pred - actual|` elementwise over `N x Tt` matrices.
pub fn forecast_errors(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if pred.len() != actual.len() || pred.iter().zip(actual).any(|(p, a)| p.len() != a.len()) {
        return Err(CgadError::Dimension("prediction and actual shapes differ".into()));
    }
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).abs()).collect())
        .collect())
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (lower, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if values.len() % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().max_by(f64::total_cmp).expect("even length >= 2");
        0.5 * (below + upper)
    }
}

/// Median and MAD (floored at [`MAD_FLOOR`]) of one row.
pub fn robust_stats(row: &[f64]) -> (f64, f64) {
    let med = median(row);
    let deviations: Vec<f64> = row.iter().map(|v| (v - med).abs()).collect();
    (med, median(&deviations).max(MAD_FLOOR))
}

/// Modified z-scores with their per-node statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustScores {
    pub scores: Vec<Vec<f64>>,
    pub median: Vec<f64>,
    pub mad: Vec<f64>,
}

/// `(e - med) / MAD` per node, statistics taken from the rows themselves.
pub fn mad_zscore(errors: &[Vec<f64>]) -> RobustScores {
    let (median, mad): (Vec<f64>, Vec<f64>) = errors.iter().map(|row| robust_stats(row)).unzip();
    zscore_with(errors, median, mad).expect("statistics match rows")
}

/// `(e - med) / MAD` per node with externally supplied statistics.
pub fn zscore_with(errors: &[Vec<f64>], median: Vec<f64>, mad: Vec<f64>) -> Result<RobustScores> {
    if median.len() != errors.len() || mad.len() != errors.len() {
        return Err(CgadError::Dimension(format!(
            "{} rows with {} medians and {} MADs",
            errors.len(),
            median.len(),
            mad.len()
        )));
    }
    let scores = errors
        .iter()
        .zip(median.iter().zip(&mad))
        .map(|(row, (&m, &d))| {
            let d = d.max(MAD_FLOOR);
            row.iter().map(|e| (e - m) / d).collect()
        })
        .collect();
    Ok(RobustScores { scores, median, mad })
}

/// Column-wise maximum.
pub fn collective_score(per_node: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_node.first().ok_or_else(|| CgadError::Dimension("no score rows".into()))?;
    if per_node.iter().any(|r| r.len() != first.len()) {
        return Err(CgadError::Dimension("score rows differ in length".into()));
    }
    Ok((0..first.len())
        .map(|t| per_node.iter().map(|r| r[t]).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// `1` where the score strictly exceeds `threshold`.
pub fn detect(collective: &[f64], threshold: f64) -> Vec<u8> {
    collective.iter().map(|&s| u8::from(s > threshold)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_examples() {
        let e = forecast_errors(&[vec![0.2, 1.0]], &[vec![0.5, 1.0]]).unwrap();
        assert!((e[0][0] - 0.3).abs() < 1e-15);
        assert_eq!(e[0][1], 0.0);
        assert!(matches!(forecast_errors(&[vec![0.0]], &[vec![0.0, 1.0]]), Err(CgadError::Dimension(_))));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn mad_example_row() {
        let r = mad_zscore(&[vec![1.0, 2.0, 3.0, 4.0, 100.0]]);
        assert_eq!(r.median, vec![3.0]);
        assert_eq!(r.mad, vec![1.0]);
        assert_eq!(r.scores[0][4], 97.0);
    }

    #[test]
    fn constant_row_scores_zero() {
        let r = mad_zscore(&[vec![0.4; 6]]);
        assert!(r.scores[0].iter().all(|&s| s == 0.0));
        assert_eq!(r.mad[0], MAD_FLOOR);
    }

    #[test]
    fn collective_and_detect_examples() {
        assert_eq!(collective_score(&[vec![1.0, 5.0, 2.0], vec![4.0, 0.0, 3.0]]).unwrap(), vec![4.0, 5.0, 3.0]);
        assert_eq!(collective_score(&[vec![1.0, -2.0]]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(detect(&[1.0, 5.0, 2.0], 3.0), vec![0, 1, 0]);
        assert_eq!(detect(&[1.0, 5.0, 2.0], f64::INFINITY), vec![0, 0, 0]);
        assert_eq!(detect(&[3.0], 3.0), vec![0]);
    }

    /// Straight-line evaluation of the whole chain for one timestamp at a time.
    fn reference(pred: &[Vec<f64>], actual: &[Vec<f64>], tau: f64) -> Vec<u8> {
        let n = pred.len();
        let t_len = pred[0].len();
        let mut stats = Vec::new();
        for i in 0..n {
            let mut e: Vec<f64> = (0..t_len).map(|t| (pred[i][t] - actual[i][t]).abs()).collect();
            e.sort_by(f64::total_cmp);
            let med = if t_len % 2 == 1 { e[t_len / 2] } else { (e[t_len / 2 - 1] + e[t_len / 2]) / 2.0 };
            let mut d: Vec<f64> = e.iter().map(|v| (v - med).abs()).collect();
            d.sort_by(f64::total_cmp);
            let mad = if t_len % 2 == 1 { d[t_len / 2] } else { (d[t_len / 2 - 1] + d[t_len / 2]) / 2.0 };
            stats.push((med, if mad < 1e-9 { 1e-9 } else { mad }));
        }
        (0..t_len)
            .map(|t| {
                let mut best = f64::NEG_INFINITY;
                for i in 0..n {
                    let a = ((pred[i][t] - actual[i][t]).abs() - stats[i].0) / stats[i].1;
                    if a > best {
                        best = a;
                    }
                }
                u8::from(best > tau)
            })
            .collect()
    }

    fn matrix(n: usize, t: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0..5.0f64, t), n)
    }

    proptest! {
        #[test]
        fn chain_matches_reference((p, a, tau) in (1usize..5, 1usize..30).prop_flat_map(|(n, t)| (matrix(n, t), matrix(n, t), -2.0..4.0f64))) {
            let errors = forecast_errors(&p, &a).unwrap();
            let s = collective_score(&mad_zscore(&errors).scores).unwrap();
            prop_assert_eq!(detect(&s, tau), reference(&p, &a, tau));
        }

        #[test]
        fn errors_are_symmetric(p in matrix(2, 8), a in matrix(2, 8)) {
            prop_assert_eq!(forecast_errors(&p, &a).unwrap(), forecast_errors(&a, &p).unwrap());
        }

        #[test]
        fn zscores_are_affine_invariant(row in prop::collection::vec(0.0..10.0f64, 5..40), alpha in 0.1..10.0f64, beta in -5.0..5.0f64) {
            let base = mad_zscore(std::slice::from_ref(&row));
            prop_assume!(base.mad[0] > 1e-6);
            let moved: Vec<f64> = row.iter().map(|e| alpha * e + beta).collect();
            let scaled = mad_zscore(&[moved]);
            for (a, b) in base.scores[0].iter().zip(&scaled.scores[0]) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn raising_threshold_never_adds_detections(s in prop::collection::vec(-10.0..10.0f64, 1..50), lo in -5.0..5.0f64, gap in 0.0..5.0f64) {
            let low = detect(&s, lo);
            let high = detect(&s, lo + gap);
            prop_assert!(low.iter().zip(&high).all(|(l, h)| h <= l));
        }

        #[test]
        fn collective_dominates(m in matrix(3, 10)) {
            let s = collective_score(&m).unwrap();
            for row in &m {
                prop_assert!(row.iter().zip(&s).all(|(a, c)| c >= a));
            }
        }

        #[test]
        fn argmax_node_survives_uniform_rescaling(m in matrix(3, 12), alpha in 0.1..10.0f64) {
            let errors: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
            let scaled: Vec<Vec<f64>> = errors.iter().map(|r| r.iter().map(|v| alpha * v).collect()).collect();
            let a = mad_zscore(&errors);
            prop_assume!(a.mad.iter().all(|&d| d > 1e-6));
            let b = mad_zscore(&scaled);
            for t in 0..12 {
                let arg = |s: &RobustScores| (0..3).max_by(|&i, &j| s.scores[i][t].total_cmp(&s.scores[j][t])).unwrap();
                let (ia, ib) = (arg(&a), arg(&b));
                // ties broken by rounding may swap, so compare values
                prop_assert!((a.scores[ia][t] - a.scores[ib][t]).abs() <= 1e-9 * (1.0 + a.scores[ia][t].abs()));
            }
        }
    }
}
