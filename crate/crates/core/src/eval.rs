//! Edge-level scoring against per-flow ground truth.

use std::collections::HashMap;

use crate::detect::Verdict;
use crate::flow_table::FlowKey;
use crate::graph::{EdgeRef, InteractionGraph};

/// An edge is malicious when more than half of the flows it stands for are.
/// Flows missing from `labels` count as benign.
pub fn edge_label(g: &InteractionGraph, e: EdgeRef, labels: &HashMap<FlowKey, bool>) -> bool {
    let label = |k: &FlowKey| labels.get(k).copied().unwrap_or(false);
    match e {
        EdgeRef::Short(i) => {
            let members = &g.short_edges()[i].members;
            2 * members.iter().filter(|k| label(k)).count() > members.len()
        }
        EdgeRef::Long(i) => label(&g.long_edges()[i].key),
    }
}

/// Area under the ROC curve by the rank-sum statistic with average ranks
/// for ties. `None` when either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn of(predicted: &[bool], truth: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
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

    /// Zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Scores, predictions and truth for every edge of one window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeScores {
    pub scores: Vec<f64>,
    pub predicted: Vec<bool>,
    pub truth: Vec<bool>,
}

impl EdgeScores {
    pub fn push_window(&mut self, g: &InteractionGraph, verdicts: &[Verdict], labels: &HashMap<FlowKey, bool>) {
        for v in verdicts {
            self.scores.push(v.loss);
            self.predicted.push(v.malicious);
            self.truth.push(edge_label(g, v.edge, labels));
        }
    }

    pub fn extend(&mut self, other: EdgeScores) {
        self.scores.extend(other.scores);
        self.predicted.extend(other.predicted);
        self.truth.extend(other.truth);
    }

    pub fn auc(&self) -> Option<f64> {
        auc(&self.scores, &self.truth)
    }

    pub fn confusion(&self) -> Confusion {
        Confusion::of(&self.predicted, &self.truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Fraction of (positive, negative) pairs ordered correctly, ties half.
    fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_and_inverted() {
        let l = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &l), Some(1.0));
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &l), Some(0.0));
        assert_eq!(auc(&[1.0; 4], &l), Some(0.5));
    }

    #[test]
    fn negative_infinity_ranks_lowest() {
        let s = [f64::NEG_INFINITY, f64::NEG_INFINITY, 3.0, 12.0];
        assert_eq!(auc(&s, &[false, false, false, true]), Some(1.0));
    }

    #[test]
    fn single_class() {
        assert_eq!(auc(&[1.0, 2.0], &[true, true]), None);
    }

    #[test]
    fn f1_values() {
        let c = Confusion::of(&[true, true, false, false], &[true, false, true, false]);
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert!((c.f1() - 0.5).abs() < 1e-12);
        assert_eq!(Confusion::of(&[false], &[false]).f1(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_pairwise(v in proptest::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            match auc(&s, &l) {
                Some(a) => prop_assert!((a - pairwise_auc(&s, &l)).abs() < 1e-12),
                None => prop_assert!(l.iter().all(|&x| x) || l.iter().all(|&x| !x)),
            }
        }
    }
}
