//! Binary classification metrics with fake as the positive class.

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::judgment::{Label, FAKE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1_fake: f64,
    pub f1_real: f64,
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One evaluation as emitted by the CLI: the metrics plus which config and
/// split produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config_hash: String,
    /// `None` when every sample was evaluated.
    pub split: Option<Split>,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Metrics for fake-probability `scores` against `labels`.
pub fn compute_metrics(scores: &[f64], labels: &[Label]) -> MetricsReport {
    assert_eq!(scores.len(), labels.len(), "one score per label");
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= FAKE_THRESHOLD, y) {
            (true, Label::Fake) => tp += 1,
            (true, Label::Real) => fp += 1,
            (false, Label::Real) => tn += 1,
            (false, Label::Fake) => fn_ += 1,
        }
    }
    let n = scores.len();
    MetricsReport {
        accuracy: if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 },
        f1_fake: f1(tp, fp, fn_),
        f1_real: f1(tn, fn_, fp),
        auc: auc(scores, labels),
        tp,
        fp,
        tn,
        fn_,
    }
}

/// Rank-statistic AUC with tied scores counted as half an ordered pair.
///
/// Works in doubled integer ranks so the result equals the pairwise count
/// divided by `P * N` exactly.
pub fn auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let pos = labels.iter().filter(|l| **l == Label::Fake).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based average rank of the tie group, doubled.
        let doubled_rank = (2 * start + (end - start) + 1) as u64;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == Label::Fake).count() as u64;
        doubled_rank_sum += positives * doubled_rank;
        start = end;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Some(doubled_u as f64 / (2 * pos * neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn perfect_scores() {
        let m = compute_metrics(&[1.0, 1.0, 0.0, 0.0], &[Fake, Fake, Real, Real]);
        assert_eq!((m.accuracy, m.f1_fake, m.f1_real, m.auc), (1.0, 1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn three_of_four_pairs_ordered() {
        let m = compute_metrics(&[0.9, 0.4, 0.6, 0.1], &[Fake, Fake, Real, Real]);
        assert_eq!(m.auc, Some(0.75));
    }

    #[test]
    fn all_fake_predictions_on_balanced_set() {
        let m = compute_metrics(&[0.7, 0.8, 0.9, 0.6], &[Fake, Fake, Real, Real]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.f1_fake, 2.0 / 3.0);
        assert_eq!(m.f1_real, 0.0);
        assert_eq!(m.total(), 4);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auc(&[0.5, 0.5], &[Fake, Real]), Some(0.5));
        assert_eq!(auc(&[0.5, 0.5, 0.2], &[Fake, Real, Real]), Some(0.75));
    }

    #[test]
    fn single_class_has_no_auc() {
        assert_eq!(auc(&[0.1, 0.9], &[Real, Real]), None);
        assert_eq!(compute_metrics(&[0.9], &[Fake]).auc, None);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = compute_metrics(&[0.5], &[Fake]);
        assert_eq!(m.tp, 1);
    }
}
