//! Equal-width histogram symbolization and plug-in entropy estimates (bits).

use std::collections::BTreeMap;

use crate::error::{CgadError, Result};

/// Largest joint state space the dense transfer-entropy counter will allocate.
pub const MAX_TE_STATES: usize = 1 << 24;

/// A sequence mapped onto `bin_count` equal-width bins over its own range.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEncoding {
    pub bin_count: usize,
    pub bin_edges: Vec<f64>,
    pub symbols: Vec<u32>,
}

/// Symbol `s` covers `[edges[s], edges[s+1])`; the last bin is right-closed.
/// A constant sequence puts every value in bin 0.
pub fn encode_histogram(series: &[f64], bin_count: usize) -> HistogramEncoding {
    assert!(bin_count >= 2, "histogram needs at least two bins");
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if series.is_empty() || !(span > 0.0) {
        let base = if lo.is_finite() { lo } else { 0.0 };
        return HistogramEncoding {
            bin_count,
            bin_edges: vec![base; bin_count + 1],
            symbols: vec![0; series.len()],
        };
    }
    let scale = bin_count as f64 / span;
    let top = (bin_count - 1) as u32;
    let symbols = series
        .iter()
        .map(|&v| (((v - lo) * scale) as u32).min(top))
        .collect();
    let mut bin_edges: Vec<f64> = (0..=bin_count).map(|s| lo + s as f64 * span / bin_count as f64).collect();
    bin_edges[bin_count] = hi;
    HistogramEncoding {
        bin_count,
        bin_edges,
        symbols,
    }
}

fn plugin_entropy<'a>(counts: impl Iterator<Item = &'a usize>, total: usize) -> f64 {
    let n = total as f64;
    -counts
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// `H(A) = -sum p log2 p` over the empirical symbol distribution.
pub fn entropy(symbols: &[u32], bin_count: usize) -> Result<f64> {
    if symbols.is_empty() {
        return Err(CgadError::Argument("entropy of an empty sequence".into()));
    }
    let mut counts = vec![0usize; bin_count.max(1)];
    for &s in symbols {
        let s = s as usize;
        if s >= counts.len() {
            return Err(CgadError::Argument(format!("symbol {s} outside [0, {bin_count})")));
        }
        counts[s] += 1;
    }
    Ok(plugin_entropy(counts.iter(), symbols.len()))
}

/// Empirical joint entropy `H(A, B)`.
pub fn joint_entropy(a: &[u32], b: &[u32]) -> Result<f64> {
    check_pair(a, b)?;
    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *counts.entry((x, y)).or_default() += 1;
    }
    Ok(plugin_entropy(counts.values(), a.len()))
}

/// `H(A | B) = H(A, B) - H(B)`.
pub fn conditional_entropy(a: &[u32], given: &[u32]) -> Result<f64> {
    check_pair(a, given)?;
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &y in given {
        *counts.entry(y).or_default() += 1;
    }
    let h_given = plugin_entropy(counts.values(), given.len());
    Ok(joint_entropy(a, given)? - h_given)
}

fn check_pair(a: &[u32], b: &[u32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CgadError::Dimension(format!(
            "sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(CgadError::Argument("entropy of an empty sequence".into()));
    }
    Ok(())
}

/// Contingency counts of `(next target symbol, target history, source history)`.
///
/// Histories are packed base-`D` codes, most recent symbol first.
pub(crate) struct TeCounts {
    bins: usize,
    xy_states: usize,
    y_states: usize,
    z_states: usize,
    xyz: Vec<u32>,
    xy: Vec<u32>,
    yz: Vec<u32>,
    y: Vec<u32>,
    samples: usize,
}

impl TeCounts {
    pub(crate) fn state_space(bins: usize, q: usize, o: usize) -> Option<usize> {
        let exp = u32::try_from(1 + q + o).ok()?;
        bins.checked_pow(exp).filter(|&s| s <= MAX_TE_STATES)
    }

    pub(crate) fn new(bins: usize, q: usize, o: usize) -> Self {
        let y_states = bins.pow(q as u32);
        let z_states = bins.pow(o as u32);
        let xy_states = bins * y_states;
        Self {
            bins,
            xy_states,
            y_states,
            z_states,
            xyz: vec![0; xy_states * z_states],
            xy: vec![0; xy_states],
            yz: vec![0; y_states * z_states],
            y: vec![0; y_states],
            samples: 0,
        }
    }

    fn code(&self, syms: &[u32], t: usize, len: usize) -> usize {
        (1..=len).fold(0usize, |acc, lag| acc * self.bins + syms[t - lag] as usize)
    }

    fn indices(&self, target: &[u32], source: &[u32], t: usize, q: usize, o: usize) -> (usize, usize, usize, usize) {
        let x = target[t] as usize;
        let y = self.code(target, t, q);
        let z = self.code(source, t, o);
        let xy = x * self.y_states + y;
        (xy * self.z_states + z, xy, y * self.z_states + z, y)
    }

    pub(crate) fn fill(&mut self, target: &[u32], source: &[u32], q: usize, o: usize) {
        self.xyz.iter_mut().for_each(|c| *c = 0);
        self.xy.iter_mut().for_each(|c| *c = 0);
        self.yz.iter_mut().for_each(|c| *c = 0);
        self.y.iter_mut().for_each(|c| *c = 0);
        let start = q.max(o);
        for t in start..target.len() {
            let (xyz, xy, yz, y) = self.indices(target, source, t, q, o);
            self.xyz[xyz] += 1;
            self.xy[xy] += 1;
            self.yz[yz] += 1;
            self.y[y] += 1;
        }
        self.samples = target.len().saturating_sub(start);
    }

    /// Pointwise `log2 [p(x|y,z) / p(x|y)]` from integer counts.
    fn local_term(&self, xyz: usize) -> f64 {
        let z = xyz % self.z_states;
        let xy = xyz / self.z_states;
        let y = xy % self.y_states;
        let yz = y * self.z_states + z;
        let num = self.xyz[xyz] as f64 * self.y[y] as f64;
        let den = self.xy[xy] as f64 * self.yz[yz] as f64;
        (num / den).log2()
    }

    /// Conditional mutual information `I(X; Z | Y)` of the empirical table.
    pub(crate) fn transfer_entropy(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        let n = self.samples as f64;
        let te: f64 = self
            .xyz
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(idx, &c)| c as f64 / n * self.local_term(idx))
            .sum();
        te.max(0.0)
    }

    /// Local transfer entropy for every sample time `t >= max(q, o)`.
    pub(crate) fn local_values(&self, target: &[u32], source: &[u32], q: usize, o: usize) -> Vec<f64> {
        (q.max(o)..target.len())
            .map(|t| self.local_term(self.indices(target, source, t, q, o).0))
            .collect()
    }

    #[allow(dead_code)]
    pub(crate) fn xy_states(&self) -> usize {
        self.xy_states
    }
}

/// Plug-in transfer entropy `source -> target` in bits on pre-encoded symbols.
pub fn histogram_te_symbols(target: &[u32], source: &[u32], bins: usize, q: usize, o: usize) -> Result<f64> {
    if target.len() != source.len() {
        return Err(CgadError::Dimension("target and source lengths differ".into()));
    }
    if target.len() < q + o + 1 {
        return Err(CgadError::Argument(format!(
            "sequence of length {} too short for histories q={q}, o={o}",
            target.len()
        )));
    }
    if TeCounts::state_space(bins, q, o).is_none() {
        return Err(CgadError::Config(format!(
            "{bins}^(1+{q}+{o}) joint states exceed the supported maximum"
        )));
    }
    let mut counts = TeCounts::new(bins, q, o);
    counts.fill(target, source, q, o);
    Ok(counts.transfer_entropy())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_histogram(&[0.0, 0.5, 1.0], 2).symbols, vec![0, 1, 1]);
        assert_eq!(encode_histogram(&[3.0, 3.0, 3.0], 4).symbols, vec![0, 0, 0]);
        let e = encode_histogram(&[0.0, 1.0, 2.0, 3.0], 4);
        assert_eq!(e.symbols, vec![0, 1, 2, 3]);
        assert_eq!(e.bin_edges, vec![0.0, 0.75, 1.5, 2.25, 3.0]);
    }

    #[test]
    fn encoded_values_fall_in_their_bins() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.3 - 3.0).collect();
        let e = encode_histogram(&xs, 7);
        for (&x, &s) in xs.iter().zip(&e.symbols) {
            let s = s as usize;
            assert!(x >= e.bin_edges[s] - 1e-12);
            if s + 1 < e.bin_count {
                assert!(x < e.bin_edges[s + 1] + 1e-12);
            } else {
                assert!(x <= e.bin_edges[s + 1]);
            }
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0, 1, 0, 1], 2).unwrap(), 1.0);
        assert_eq!(entropy(&[0, 0, 0, 0], 2).unwrap(), 0.0);
        assert_eq!(entropy(&[0, 0, 1, 1, 2, 2, 3, 3], 4).unwrap(), 2.0);
        assert!(matches!(entropy(&[], 2), Err(CgadError::Argument(_))));
    }

    #[test]
    fn joint_entropy_examples() {
        assert_eq!(joint_entropy(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap(), 1.0);
        // four equiprobable joint outcomes (0,0),(1,0),(0,1),(1,1)
        assert_eq!(joint_entropy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 2.0);
        assert_eq!(joint_entropy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(matches!(joint_entropy(&[0, 1], &[0]), Err(CgadError::Dimension(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        assert_eq!(conditional_entropy(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 0.0);
        assert_eq!(conditional_entropy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(conditional_entropy(&[0, 1, 0, 1], &[3, 3, 3, 3]).unwrap(), 1.0);
        assert!(conditional_entropy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn identical_source_carries_no_transfer() {
        let xs: Vec<u32> = (0..500).map(|i| ((i * 7919) % 13 % 4) as u32).collect();
        assert_eq!(histogram_te_symbols(&xs, &xs, 4, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn too_short_sequence_rejected() {
        assert!(matches!(
            histogram_te_symbols(&[0, 1], &[1, 0], 2, 1, 1),
            Err(CgadError::Argument(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn chain_rule(pairs in prop::collection::vec((0u32..5, 0u32..5), 1..200)) {
                let (a, b): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
                let lhs = joint_entropy(&a, &b).unwrap();
                let rhs = conditional_entropy(&a, &b).unwrap() + entropy(&b, 5).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }

            #[test]
            fn histogram_te_nonnegative(
                pairs in prop::collection::vec((0u32..3, 0u32..3), 4..300),
                q in 1usize..3,
                o in 1usize..3,
            ) {
                let (a, b): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
                if a.len() > q + o {
                    prop_assert!(histogram_te_symbols(&a, &b, 3, q, o).unwrap() >= 0.0);
                }
            }
        }
    }
}
