use serde::{Deserialize, Serialize};

use super::{BenchError, Task};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_labels(pred: &[bool], truth: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

/// `(TP TN - FP FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN))`, 0 when the
/// denominator vanishes.
pub fn mcc_from_confusion(c: Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den
    }
}

pub fn binary_mcc(pred: &[bool], truth: &[bool]) -> f64 {
    mcc_from_confusion(Confusion::from_labels(pred, truth))
}

/// Multiclass MCC from the `k x k` confusion matrix (Gorodkin's R_K).
pub fn multiclass_mcc(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut cm = vec![vec![0f64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1.0;
    }
    let n: f64 = pred.len() as f64;
    let correct: f64 = (0..k).map(|i| cm[i][i]).sum();
    let t_k: Vec<f64> = (0..k).map(|i| cm[i].iter().sum()).collect();
    let p_k: Vec<f64> = (0..k).map(|j| (0..k).map(|i| cm[i][j]).sum()).collect();
    let tp: f64 = t_k.iter().zip(&p_k).map(|(t, p)| t * p).sum();
    let num = correct * n - tp;
    let den = ((n * n - p_k.iter().map(|p| p * p).sum::<f64>()) * (n * n - t_k.iter().map(|t| t * t).sum::<f64>())).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

/// Rank-statistic AUROC with tied scores sharing their average rank;
/// `None` when only one class is present.
pub fn auroc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = ranks.iter().zip(truth).filter(|(_, &t)| t).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len().max(1) as f64
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len().max(1) as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub mcc: Option<f64>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    /// Labels left out of the AUROC average for lacking a class.
    pub skipped_auroc_labels: usize,
}

impl MetricRecord {
    /// `(name, value)` for every metric that applies.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("accuracy", self.accuracy),
            ("auroc", self.auroc),
            ("mcc", self.mcc),
            ("mae", self.mae),
            ("mse", self.mse),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Metrics of `scores` (one row of `task.n_outputs()` per record: class
/// probabilities, label probabilities or values) against `targets`
/// (class index, label vector or value).
pub fn evaluate_predictions(task: &Task, scores: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<MetricRecord, BenchError> {
    if scores.len() != targets.len() {
        return Err(BenchError::ShapeMismatch("evaluate_predictions"));
    }
    let n = scores.len();
    let mut rec = MetricRecord {
        n,
        ..MetricRecord::default()
    };
    if n == 0 {
        return Ok(rec);
    }
    match task {
        Task::Binary => {
            let s: Vec<f64> = scores.iter().map(|r| r[0]).collect();
            let truth: Vec<bool> = targets.iter().map(|t| t[0] > 0.5).collect();
            let pred: Vec<bool> = s.iter().map(|&p| p >= 0.5).collect();
            rec.accuracy = Some(accuracy(&pred, &truth));
            rec.mcc = Some(binary_mcc(&pred, &truth));
            rec.auroc = auroc(&s, &truth);
            rec.skipped_auroc_labels = rec.auroc.is_none() as usize;
        }
        Task::Multiclass { k } => {
            let truth: Vec<usize> = targets.iter().map(|t| t[0] as usize).collect();
            let pred: Vec<usize> = scores
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                        .0
                })
                .collect();
            rec.accuracy = Some(accuracy(&pred, &truth));
            rec.mcc = Some(multiclass_mcc(&pred, &truth, *k));
            let (mean, skipped) = macro_auroc(scores, |i, c| truth[i] == c, *k);
            rec.auroc = mean;
            rec.skipped_auroc_labels = skipped;
        }
        Task::Multilabel { k } => {
            let mut accs = 0.0;
            let mut mccs = 0.0;
            for c in 0..*k {
                let truth: Vec<bool> = targets.iter().map(|t| t[c] > 0.5).collect();
                let pred: Vec<bool> = scores.iter().map(|r| r[c] >= 0.5).collect();
                accs += accuracy(&pred, &truth);
                let single_class = truth.iter().all(|&t| t) || truth.iter().all(|&t| !t);
                if !single_class {
                    mccs += binary_mcc(&pred, &truth);
                }
            }
            rec.accuracy = Some(accs / *k as f64);
            rec.mcc = Some(mccs / *k as f64);
            let (mean, skipped) = macro_auroc(scores, |i, c| targets[i][c] > 0.5, *k);
            rec.auroc = mean;
            rec.skipped_auroc_labels = skipped;
        }
        Task::Regression | Task::Interaction => {
            let p: Vec<f64> = scores.iter().map(|r| r[0]).collect();
            let t: Vec<f64> = targets.iter().map(|r| r[0]).collect();
            rec.mae = Some(mae(&p, &t));
            rec.mse = Some(mse(&p, &t));
        }
    }
    if rec.skipped_auroc_labels > 0 {
        log::info!("{} label(s) with a single class left out of AUROC", rec.skipped_auroc_labels);
    }
    Ok(rec)
}

fn macro_auroc(scores: &[Vec<f64>], positive: impl Fn(usize, usize) -> bool, k: usize) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut used = 0;
    for c in 0..k {
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let truth: Vec<bool> = (0..scores.len()).map(|i| positive(i, c)).collect();
        if let Some(a) = auroc(&s, &truth) {
            sum += a;
            used += 1;
        }
    }
    ((used > 0).then(|| sum / used as f64), k - used)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let c = Confusion { tp: 1, tn: 2, fp: 1, fn_: 0 };
        assert!((mcc_from_confusion(c) - 2.0 / 12f64.sqrt()).abs() < 1e-12);
        let truth = [true, false, true, false];
        assert_eq!(binary_mcc(&truth, &truth), 1.0);
        let inverted: Vec<bool> = truth.iter().map(|t| !t).collect();
        assert_eq!(binary_mcc(&inverted, &truth), -1.0);
        assert_eq!(auroc(&[0.9, 0.1, 0.8, 0.2], &truth), Some(1.0));
        assert_eq!(auroc(&[0.5; 4], &truth), Some(0.5));
        assert_eq!(auroc(&[0.5, 0.2], &[true, true]), None);
    }

    #[test]
    fn multiclass_reduces_to_binary() {
        let pred = [1, 0, 1, 1, 0, 0];
        let truth = [1, 0, 0, 1, 1, 0];
        let b = binary_mcc(
            &pred.map(|p| p == 1),
            &truth.map(|t| t == 1),
        );
        assert!((multiclass_mcc(&pred, &truth, 2) - b).abs() < 1e-12);
    }
}
