//! ROC curves, AUC and per-task summaries across seeds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// One vertex of an ROC curve. `threshold` is the score at or above which a
/// sample is called positive; the first vertex uses `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("score {s} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!("need both classes, got {pos} positive and {neg} negative")));
    }
    Ok((pos, neg))
}

/// ROC curve with one vertex per distinct score, from (0,0) to (1,1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: s, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(points)
}

/// Trapezoidal area under a curve given by its vertices in order.
pub fn auc(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(auc(&roc_curve(scores, labels)?))
}

/// True- and false-positive rates when calling `score >= threshold` positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRates {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

pub fn rates_at(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Result<Vec<ThresholdRates>> {
    let (pos, neg) = class_counts(scores, labels)?;
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&s, &l) in scores.iter().zip(labels) {
                if s >= threshold {
                    if l {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            ThresholdRates { threshold, tpr: tp as f64 / pos as f64, fpr: fp as f64 / neg as f64 }
        })
        .collect())
}

/// ROC summary of one task. Task ids are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RocReport {
    pub task_id: usize,
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub rates: Vec<ThresholdRates>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl RocReport {
    pub fn new(task_id: usize, scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Result<Self> {
        let points = roc_curve(scores, labels).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("task {task_id}: {msg}")),
            other => other,
        })?;
        let n_pos = labels.iter().filter(|&&l| l).count();
        Ok(RocReport {
            task_id,
            auc: auc(&points),
            points,
            rates: rates_at(scores, labels, thresholds)?,
            n_pos,
            n_neg: labels.len() - n_pos,
        })
    }
}

/// Per-task AUCs of one trained model. `None` marks a task that could not
/// be scored because the evaluated split holds only one class.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAucs {
    pub aucs: Vec<Option<f64>>,
    /// `[negatives, positives]` per task in the evaluated split.
    pub counts: Vec<[usize; 2]>,
}

impl RunAucs {
    pub fn mean_auc(&self) -> Option<f64> {
        let scored: Vec<f64> = self.aucs.iter().flatten().copied().collect();
        (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task_id: usize,
    pub mean_auc: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two scored runs.
    pub std_auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Mean and sample standard deviation of each task's AUC across runs.
pub fn multi_seed_report(runs: &[RunAucs]) -> Result<Vec<SummaryRow>> {
    let first = runs.first().ok_or_else(|| Error::InvalidArgument("no runs to summarize".into()))?;
    let m = first.aucs.len();
    for (r, run) in runs.iter().enumerate() {
        if run.aucs.len() != m || run.counts.len() != m {
            return Err(Error::InvalidArgument(format!(
                "run {r} covers {} tasks, run 0 covers {m}",
                run.aucs.len()
            )));
        }
    }
    Ok((0..m)
        .map(|j| {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.aucs[j]).collect();
            let n = values.len() as f64;
            // Shifting by the first value keeps identical runs exact.
            let mean = values.first().map(|&v0| v0 + values.iter().map(|v| v - v0).sum::<f64>() / n);
            let std = mean.filter(|_| values.len() > 1).map(|mu| {
                libm::sqrt(values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0))
            });
            let [n_neg, n_pos] = first.counts[j];
            SummaryRow { task_id: j + 1, mean_auc: mean, std_auc: std, n_pos, n_neg }
        })
        .collect())
}

/// `0.912 ± 0.010`, `0.912` for a single run, `—` for a skipped task.
pub fn format_auc(row: &SummaryRow) -> String {
    match (row.mean_auc, row.std_auc) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        (Some(m), None) => format!("{m:.3}"),
        (None, _) => String::from("—"),
    }
}

/// Aligned plain-text table of a summary.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| [format!("{}", r.task_id), format_auc(r), format!("{}", r.n_pos), format!("{}", r.n_neg)])
        .collect();
    let header = ["task", "AUC", "n_pos", "n_neg"];
    let mut width = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |fields: [&str; 4]| {
        for (k, (f, w)) in fields.iter().zip(width).enumerate() {
            let pad = w - f.chars().count();
            if k > 0 {
                out.push_str("  ");
            }
            // Left-align the first column, right-align the numbers.
            if k == 0 {
                let _ = write!(out, "{f}{}", " ".repeat(pad));
            } else {
                let _ = write!(out, "{}{f}", " ".repeat(pad));
            }
        }
        out.push('\n');
    };
    line(header);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_ranking() {
        let pts = roc_curve(&[0.9, 0.1], &[true, false]).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&pts), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn ties_collapse() {
        let pts = roc_curve(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(auc(&pts), 0.5);
    }

    #[test]
    fn single_class_names_task() {
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
        let err = RocReport::new(4, &[0.1, 0.2], &[false, false], &[]).unwrap_err();
        assert!(format!("{err}").contains("task 4"));
    }

    #[test]
    fn threshold_rates() {
        let r = rates_at(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false], &[0.5, 0.0, 1.0]).unwrap();
        assert_eq!((r[0].tpr, r[0].fpr), (0.5, 0.5));
        assert_eq!((r[1].tpr, r[1].fpr), (1.0, 1.0));
        assert_eq!((r[2].tpr, r[2].fpr), (0.0, 0.0));
    }

    #[test]
    fn two_run_summary() {
        let run = |a| RunAucs { aucs: vec![Some(a), None], counts: vec![[10, 2], [5, 0]] };
        let rows = multi_seed_report(&[run(0.8), run(0.9)]).unwrap();
        assert!((rows[0].mean_auc.unwrap() - 0.85).abs() < 1e-12);
        assert!((rows[0].std_auc.unwrap() - 0.070710678118654).abs() < 1e-12);
        assert_eq!(rows[0].n_pos, 2);
        assert_eq!(rows[1].mean_auc, None);
        let same = multi_seed_report(&[run(0.7), run(0.7), run(0.7)]).unwrap();
        assert_eq!(same[0].std_auc, Some(0.0));
        let text = render_table(&rows);
        assert!(text.contains("0.850 ± 0.071"));
        assert!(text.contains('—'));
    }

    #[test]
    fn mismatched_runs() {
        let a = RunAucs { aucs: vec![Some(0.5)], counts: vec![[1, 1]] };
        let b = RunAucs { aucs: vec![Some(0.5), Some(0.5)], counts: vec![[1, 1], [1, 1]] };
        assert!(multi_seed_report(&[a, b]).is_err());
        assert!(multi_seed_report(&[]).is_err());
    }
}
