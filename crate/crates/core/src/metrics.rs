//! Evaluation metrics: accuracy aggregation and ROC/AUC sweeps.

use serde::{Deserialize, Serialize};

pub use crate::util::mean_std;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocReport {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

/// ROC sweep over all score thresholds: positives are the novel scores,
/// higher means more novel. Points run from (0,0) to (1,1); the AUC is the
/// trapezoid area under them.
pub fn roc_curve(novel_scores: &[f64], known_scores: &[f64]) -> RocReport {
    assert!(
        !novel_scores.is_empty() && !known_scores.is_empty(),
        "roc needs both positive and negative scores"
    );
    let mut all: Vec<(f64, bool)> = novel_scores
        .iter()
        .map(|&s| (s, true))
        .chain(known_scores.iter().map(|&s| (s, false)))
        .collect();
    // Descending score: thresholds sweep from strictest to loosest.
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let np = novel_scores.len() as f64;
    let nn = known_scores.len() as f64;
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut prev_score = f64::INFINITY;
    for (score, is_novel) in all {
        if score != prev_score {
            points.push(RocPoint { threshold: score, fpr: fp / nn, tpr: tp / np });
            prev_score = score;
        }
        if is_novel {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
    }
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });

    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    RocReport { auc, points }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_gives_auc_one() {
        let roc = roc_curve(&[3.0, 4.0, 5.0], &[0.0, 1.0, 2.0]);
        assert!((roc.auc - 1.0).abs() < 1e-12);
        assert_eq!(roc.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(roc.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn inverted_scores_give_auc_zero() {
        let roc = roc_curve(&[0.0, 1.0], &[2.0, 3.0]);
        assert!(roc.auc.abs() < 1e-12);
    }

    #[test]
    fn interleaved_scores_give_expected_areas() {
        let roc = roc_curve(&[1.0, 3.0], &[2.0, 4.0]);
        assert!((roc.auc - 0.25).abs() < 1e-12);
        let roc2 = roc_curve(&[1.0, 2.0], &[1.0, 2.0]);
        assert!((roc2.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_case() {
        // Novel {0.9, 0.7, 0.4} vs known {0.8, 0.3}: 4 of 6 pairwise wins.
        let roc = roc_curve(&[0.9, 0.7, 0.4], &[0.8, 0.3]);
        assert!((roc.auc - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_aggregation() {
        let m = MeanStd::of(&[2.0, 4.0]);
        assert_eq!(m.mean, 3.0);
        assert_eq!(m.std, 1.0);
    }
}
