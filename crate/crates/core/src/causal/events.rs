use super::histogram::{encode_histogram, TeCounts};
use super::TeConfig;
use crate::error::{CgadError, Result};

/// Transfer entropy of one consecutive block of a node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTe {
    pub start: usize,
    pub end: usize,
    pub te: f64,
    /// Block is among the top decile of blocks by TE.
    pub highlighted: bool,
    /// Absolute time indices of the strongest local TE values in the block.
    pub top_events: Vec<usize>,
}

/// Histogram TE `source -> target` on consecutive blocks of `block` samples.
///
/// Within each block the local (pointwise) TE values rank individual time
/// steps; the `top_events` strongest are reported as causal events.
pub fn windowed_te(
    target: &[f64],
    source: &[f64],
    block: usize,
    top_events: usize,
    cfg: &TeConfig,
) -> Result<Vec<BlockTe>> {
    if target.len() != source.len() {
        return Err(CgadError::Dimension("target and source lengths differ".into()));
    }
    let (q, o) = (cfg.target_history, cfg.source_history);
    if block < q + o + 1 {
        return Err(CgadError::Argument(format!("block of {block} samples too short")));
    }
    let lag = q.max(o);
    let mut counts = TeCounts::new(cfg.bin_count, q, o);
    let mut blocks = Vec::new();
    let mut start = 0;
    while start + q + o < target.len() {
        let end = (start + block).min(target.len());
        let t = encode_histogram(&target[start..end], cfg.bin_count).symbols;
        let s = encode_histogram(&source[start..end], cfg.bin_count).symbols;
        counts.fill(&t, &s, q, o);
        let local = counts.local_values(&t, &s, q, o);
        let mut order: Vec<usize> = (0..local.len()).collect();
        order.sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
        let mut events: Vec<usize> = order.iter().take(top_events).map(|&k| start + lag + k).collect();
        events.sort_unstable();
        blocks.push(BlockTe {
            start,
            end,
            te: counts.transfer_entropy(),
            highlighted: false,
            top_events: events,
        });
        start = end;
    }
    let keep = blocks.len().div_ceil(10);
    let mut ranked: Vec<usize> = (0..blocks.len()).collect();
    ranked.sort_by(|&a, &b| blocks[b].te.total_cmp(&blocks[a].te).then(a.cmp(&b)));
    for &k in ranked.iter().take(keep) {
        blocks[k].highlighted = true;
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coupled_blocks_are_highlighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = 10_000;
        let source: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let mut target: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        // coupling active only in blocks 3 and 7
        for t in (1500..2000).chain(3500..4000) {
            target[t] = source[t - 1];
        }
        let blocks = windowed_te(&target, &source, 500, 10, &TeConfig::default()).unwrap();
        assert_eq!(blocks.len(), 20);
        let lit: Vec<usize> = blocks.iter().enumerate().filter(|(_, b)| b.highlighted).map(|(k, _)| k).collect();
        assert_eq!(lit, vec![3, 7]);
        assert!(blocks.iter().all(|b| b.top_events.len() == 10));
        assert!(blocks[3].top_events.iter().all(|&t| (1500..2000).contains(&t)));
    }
}
