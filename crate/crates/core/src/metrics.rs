//! Confusion-matrix rates, ROC/AUC and the rate-based precision identity.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

/// Every rate is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub f_score: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn rates(&self) -> Rates {
        let tpr = ratio(self.tp, self.positives());
        let tnr = ratio(self.tn, self.negatives());
        let f_den = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        Rates {
            tpr,
            tnr,
            fpr: ratio(self.fp, self.negatives()),
            accuracy: ratio(self.tp + self.tn, self.total()),
            balanced_accuracy: tpr.zip(tnr).map(|(a, b)| (a + b) / 2.0),
            f_score: (f_den > 0.0).then(|| self.tp as f64 / f_den),
            precision: ratio(self.tp, self.tp + self.fp),
        }
    }
}

/// Counts outcomes of `preds` against `labels`.
pub fn confusion(preds: &[bool], labels: &[bool]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
        }
    }
    Ok(cm)
}

/// `TPR·n / (TPR·n + FPR·(1 − n))` where `n` is the positive-class share.
pub fn precision_from_rates(tpr: f64, fpr: f64, positive_share: f64) -> Option<f64> {
    let hit = tpr * positive_share;
    let den = hit + fpr * (1.0 - positive_share);
    (den > 0.0).then(|| hit / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from the strictest threshold to the loosest.
    pub points: Vec<(f64, f64)>,
    /// Score thresholds for `points[1..]` (predict positive when `score >= t`).
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps every distinct score as a threshold; AUC by the trapezoid rule.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Metrics(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metrics(
            "ROC needs at least one positive and one negative".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metrics("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(t);
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, thresholds, auc })
}
