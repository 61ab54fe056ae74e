//! Point-wise, composite and point-adjusted F1.
//!
//! Every ratio with a zero denominator is reported as 0.

use std::fmt::Write as _;

use crate::error::{CgadError, Result};

/// Decisions and ground truth over the same steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRun {
    decisions: Vec<u8>,
    labels: Vec<u8>,
}

impl LabeledRun {
    pub fn new(decisions: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if decisions.len() != labels.len() {
            return Err(CgadError::Dimension(format!(
                "{} decisions for {} labels",
                decisions.len(),
                labels.len()
            )));
        }
        if decisions.iter().chain(&labels).any(|&v| v > 1) {
            return Err(CgadError::Argument("decisions and labels must be 0 or 1".into()));
        }
        Ok(Self { decisions, labels })
    }

    pub fn decisions(&self) -> &[u8] {
        &self.decisions
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Maximal runs of ones as inclusive `(start, end)` pairs.
pub fn segments(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &v) in labels.iter().enumerate() {
        match (v == 1, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn of(decisions: &[u8], labels: &[u8]) -> Self {
        let mut c = Self::default();
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1_pointwise(run: &LabeledRun) -> f64 {
    Confusion::of(&run.decisions, &run.labels).f1()
}

/// Fraction of ground-truth segments with at least one positive decision.
pub fn event_recall(run: &LabeledRun) -> f64 {
    let segs = segments(&run.labels);
    let hit = segs
        .iter()
        .filter(|&&(s, e)| run.decisions[s..=e].contains(&1))
        .count();
    ratio(hit, segs.len())
}

/// Harmonic mean of point-wise precision and event-wise recall.
pub fn f1_composite(run: &LabeledRun) -> f64 {
    harmonic(Confusion::of(&run.decisions, &run.labels).precision(), event_recall(run))
}

/// Marks every step of a ground-truth segment positive once any of its
/// steps is positive; steps outside segments are untouched.
pub fn point_adjust(run: &LabeledRun) -> Vec<u8> {
    let mut out = run.decisions.clone();
    for (s, e) in segments(&run.labels) {
        if out[s..=e].contains(&1) {
            out[s..=e].iter_mut().for_each(|d| *d = 1);
        }
    }
    out
}

pub fn f1_point_adjusted(run: &LabeledRun) -> f64 {
    Confusion::of(&point_adjust(run), &run.labels).f1()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub event_recall: f64,
    pub f1_composite: f64,
    pub f1_point_adjusted: f64,
    pub gt_event_count: usize,
    /// Runs of positive decisions before point adjustment.
    pub detected_event_count: usize,
    /// Set when the labels hold no anomaly; composite F1 is then 0.
    pub no_gt_events: bool,
}

impl EvalReport {
    pub fn new(run: &LabeledRun) -> Self {
        let c = Confusion::of(&run.decisions, &run.labels);
        let gt_event_count = segments(&run.labels).len();
        Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            event_recall: event_recall(run),
            f1_composite: f1_composite(run),
            f1_point_adjusted: f1_point_adjusted(run),
            gt_event_count,
            detected_event_count: segments(&run.decisions).len(),
            no_gt_events: gt_event_count == 0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k:<22}{v}");
        }
        if self.no_gt_events {
            out.push_str("warning: labels contain no anomaly events; f1_composite reported as 0\n");
        }
        out
    }

    pub fn csv_header() -> String {
        let empty = LabeledRun { decisions: Vec::new(), labels: Vec::new() };
        Self::new(&empty).fields().iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.fields().into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tp", self.tp.to_string()),
            ("fp", self.fp.to_string()),
            ("fn", self.fn_.to_string()),
            ("tn", self.tn.to_string()),
            ("precision", format!("{:.6}", self.precision)),
            ("recall", format!("{:.6}", self.recall)),
            ("f1", format!("{:.6}", self.f1)),
            ("event_recall", format!("{:.6}", self.event_recall)),
            ("f1_composite", format!("{:.6}", self.f1_composite)),
            ("f1_point_adjusted", format!("{:.6}", self.f1_point_adjusted)),
            ("gt_event_count", self.gt_event_count.to_string()),
            ("detected_event_count", self.detected_event_count.to_string()),
            ("no_gt_events", self.no_gt_events.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(d: &[u8], l: &[u8]) -> LabeledRun {
        LabeledRun::new(d.to_vec(), l.to_vec()).unwrap()
    }

    /// Labels (3..6), a single positive decision at 4.
    fn hit_at_four() -> LabeledRun {
        run(&[0, 0, 0, 0, 1, 0, 0, 0], &[0, 0, 0, 1, 1, 1, 1, 0])
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segments(&[0, 1, 1, 0, 1]), vec![(1, 2), (4, 4)]);
        assert_eq!(segments(&[0, 0, 0]), vec![]);
        assert_eq!(segments(&[1; 5]), vec![(0, 4)]);
    }

    #[test]
    fn pointwise_examples() {
        assert_eq!(f1_pointwise(&run(&[0, 1, 0], &[0, 1, 0])), 1.0);
        assert_eq!(f1_pointwise(&run(&[0, 0, 0], &[0, 1, 1])), 0.0);
        let c = Confusion::of(&[1, 1, 0, 0], &[1, 0, 1, 0]);
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.5, 0.5, 0.5));
        assert!(matches!(LabeledRun::new(vec![0], vec![0, 1]), Err(CgadError::Dimension(_))));
    }

    #[test]
    fn composite_examples() {
        assert_eq!(f1_composite(&hit_at_four()), 1.0);
        assert_eq!(f1_composite(&run(&[1, 1, 1], &[0, 0, 1])), 0.5);
        assert_eq!(f1_composite(&run(&[0, 0, 0], &[0, 1, 1])), 0.0);
        let r = EvalReport::new(&run(&[1, 0], &[0, 0]));
        assert!(r.no_gt_events);
        assert_eq!(r.f1_composite, 0.0);
    }

    #[test]
    fn point_adjust_examples() {
        assert_eq!(point_adjust(&hit_at_four()), vec![0, 0, 0, 1, 1, 1, 1, 0]);
        assert_eq!(f1_point_adjusted(&hit_at_four()), 1.0);
        assert_eq!(point_adjust(&run(&[1, 0, 0, 1], &[0, 0, 1, 1])), vec![1, 0, 1, 1]);
        assert_eq!(point_adjust(&run(&[0, 0, 0], &[0, 1, 1])), vec![0, 0, 0]);
        assert_eq!(f1_point_adjusted(&run(&[0, 0, 0], &[0, 1, 1])), 0.0);
    }

    #[test]
    fn report_counts() {
        let r = EvalReport::new(&run(&[1, 1, 0, 0, 1, 0], &[1, 0, 1, 0, 1, 1]));
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (2, 1, 2, 1));
        assert_eq!(r.gt_event_count, 3);
        assert_eq!(r.detected_event_count, 2);
        assert_eq!(r.event_recall, 2.0 / 3.0);
        assert_eq!(EvalReport::csv_header().split(',').count(), r.to_csv_row().split(',').count());
        assert!(r.to_text().contains("f1_point_adjusted"));
    }

    fn binary(len: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..=1, len)
    }

    fn pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| (binary(n), binary(n)))
    }

    proptest! {
        #[test]
        fn adjusted_f1_dominates((d, l) in pair()) {
            let r = run(&d, &l);
            prop_assert!(f1_point_adjusted(&r) >= f1_pointwise(&r));
        }

        #[test]
        fn segments_round_trip(l in prop::collection::vec(0u8..=1, 0..60)) {
            let mut back = vec![0u8; l.len()];
            for (s, e) in segments(&l) {
                back[s..=e].iter_mut().for_each(|v| *v = 1);
            }
            prop_assert_eq!(back, l);
        }

        #[test]
        fn single_segment_perfect_precision(len in 3usize..40, s in 0usize..10, w in 1usize..10, hits in prop::collection::vec(any::<bool>(), 10)) {
            let s = s.min(len - 1);
            let e = (s + w - 1).min(len - 1);
            let mut labels = vec![0u8; len];
            labels[s..=e].iter_mut().for_each(|v| *v = 1);
            let mut d = vec![0u8; len];
            for (k, &h) in hits.iter().enumerate() {
                if h && s + k <= e {
                    d[s + k] = 1;
                }
            }
            let r = run(&d, &labels);
            let p = Confusion::of(&d, &labels).precision();
            prop_assume!(p == 1.0);
            let re = event_recall(&r);
            prop_assert_eq!(f1_composite(&r), 2.0 * re / (1.0 + re));
        }

        #[test]
        fn appending_true_negatives_changes_nothing((d, l) in pair(), extra in 1usize..20) {
            let a = EvalReport::new(&run(&d, &l));
            let mut d2 = d.clone();
            let mut l2 = l.clone();
            d2.extend(std::iter::repeat_n(0, extra));
            l2.extend(std::iter::repeat_n(0, extra));
            let b = EvalReport::new(&run(&d2, &l2));
            prop_assert_eq!(b.tn, a.tn + extra);
            prop_assert_eq!(EvalReport { tn: a.tn, ..b }, a);
        }
    }
}
